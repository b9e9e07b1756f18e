#pragma once

#include <string>

#include "apm/loss.hpp"
#include "apm/training.hpp"
#include "apm/unet.hpp"

namespace apm {

// Everything a pipeline run needs, assembled from flat key=value config text.
struct PipelineConfig {
  UNetConfig model;
  TrainConfig train;
  LossConfig loss;
  double fraction = 0.10;  // mask selection fraction
  int mask_batches = 32;   // calibration batches per task
  double intensity = 0.5;  // degradation strength
};

// Flat key=value format, one pair per line; '#' starts a comment. Keys match
// the config field names (model_seed disambiguates the model init seed from
// the training seed; image_size accepts "32" or "32x48"). Unknown keys are
// rejected.
PipelineConfig parse_config_text(const std::string& text);
PipelineConfig parse_config_file(const std::string& path);

}  // namespace apm
