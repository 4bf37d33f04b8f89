#pragma once

#include "flusense/pipeline/config.hpp"
#include "flusense/pipeline/runners.hpp"

namespace flusense::pipeline {

// Temporal split at the season midpoint; every task x model cell, DeLong
// against the full model, and critical-difference comparisons.
ExperimentOutput RunExperiment1(const ExperimentConfig& config, const RunOptions& options = {});

// The three pretraining tasks and a from-scratch control on the first
// configured task.
ExperimentOutput RunExperiment2(const ExperimentConfig& config, const RunOptions& options = {});

// Pretraining on never-positive users, then k-fold small-data finetuning on
// the positive users.
ExperimentOutput RunExperiment3(const ExperimentConfig& config, const RunOptions& options = {});

// Primary-cohort training, zero-shot scoring of the transfer cohort.
ExperimentOutput RunExperiment4(const ExperimentConfig& config, const RunOptions& options = {});

}  // namespace flusense::pipeline
