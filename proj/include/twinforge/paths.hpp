#pragma once

#include <filesystem>

namespace twinforge {

/// Root of the shipped data files (templates, rubric, stop words, grammar
/// keywords, migration table). $TWINFORGE_DATA_DIR overrides the build-time
/// default.
std::filesystem::path data_dir();

}  // namespace twinforge
