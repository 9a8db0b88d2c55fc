#pragma once

// Umbrella header for the library (everything except the CLI layer).

#include "bisim/approximator.hpp"
#include "bisim/environments.hpp"
#include "bisim/errors.hpp"
#include "bisim/evaluation.hpp"
#include "bisim/exact_metrics.hpp"
#include "bisim/io.hpp"
#include "bisim/mdp.hpp"
#include "bisim/sampled_metrics.hpp"
#include "bisim/state_metric.hpp"
#include "bisim/wasserstein.hpp"
