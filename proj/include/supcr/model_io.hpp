#pragma once

#include <string>

#include "supcr/training.hpp"

namespace supcr {

enum class ModelFormat { Text, Binary };

/// Versioned header, layer shapes, then row-major parameters. Text mode
/// writes 17 significant digits per value; load() detects the format.
void save_model(const TrainedModel& model, const std::string& path, ModelFormat format = ModelFormat::Text);
TrainedModel load_model(const std::string& path);

}  // namespace supcr
