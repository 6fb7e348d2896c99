#pragma once

#include "lcmia/attacks.hpp"
#include "lcmia/corpus.hpp"
#include "lcmia/error.hpp"
#include "lcmia/evaluation.hpp"
#include "lcmia/gateway.hpp"
#include "lcmia/http_gateway.hpp"
#include "lcmia/meta_classifier.hpp"
#include "lcmia/pipeline.hpp"
#include "lcmia/prompt.hpp"
#include "lcmia/scoring.hpp"
#include "lcmia/simulator.hpp"
#include "lcmia/synthetic.hpp"
