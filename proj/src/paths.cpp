#include "twinforge/paths.hpp"

#include <cstdlib>

#ifndef TWINFORGE_DEFAULT_DATA_DIR
#define TWINFORGE_DEFAULT_DATA_DIR "data"
#endif

namespace twinforge {

std::filesystem::path data_dir() {
    if (const char* env = std::getenv("TWINFORGE_DATA_DIR"); env && *env) return env;
    return TWINFORGE_DEFAULT_DATA_DIR;
}

}  // namespace twinforge
