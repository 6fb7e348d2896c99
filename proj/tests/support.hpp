#pragma once

#include <vector>

#include "lcmia/corpus.hpp"
#include "lcmia/synthetic.hpp"

// A few small contexts plus held-out documents, shared by the tests.
struct World {
  std::vector<lcmia::ContextSpec> contexts;
  std::vector<lcmia::TargetSample> members;
  std::vector<lcmia::TargetSample> nonmembers;
};

inline World make_world(std::size_t n_contexts = 3, std::size_t docs_per_context = 10,
                        std::size_t n_nonmembers = 30, std::uint64_t seed = 1) {
  World w;
  lcmia::DocumentSet pool(lcmia::synthetic::generate_documents(n_contexts * docs_per_context, seed, "mem"));
  w.contexts = lcmia::build_contexts(pool, n_contexts, docs_per_context, docs_per_context / 2,
                                     lcmia::title_question_source(), seed);
  for (const auto& c : w.contexts)
    for (const auto& d : c.documents) w.members.push_back({d, lcmia::Membership::Member, c.id});
  auto held_out = lcmia::synthetic::generate_documents(n_nonmembers, seed + 1000, "non");
  for (std::size_t i = 0; i < held_out.size(); ++i)
    w.nonmembers.push_back({held_out[i], lcmia::Membership::NonMember, w.contexts[i % n_contexts].id});
  return w;
}

inline const lcmia::ContextSpec& context_of(const World& w, const lcmia::TargetSample& t) {
  for (const auto& c : w.contexts)
    if (c.id == t.source_context_id) return c;
  return w.contexts.front();
}
