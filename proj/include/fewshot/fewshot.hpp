#pragma once

#include "fewshot/classifier.hpp"
#include "fewshot/episodes.hpp"
#include "fewshot/errors.hpp"
#include "fewshot/evaluation.hpp"
#include "fewshot/feature_set.hpp"
#include "fewshot/graph.hpp"
#include "fewshot/random.hpp"
#include "fewshot/report.hpp"
