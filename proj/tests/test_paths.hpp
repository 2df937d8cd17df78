#pragma once

#include <string>

#ifndef ROLECOMMS_SOURCE_DIR
#error "ROLECOMMS_SOURCE_DIR must point at the repository root"
#endif

namespace test_paths {

inline std::string root() { return ROLECOMMS_SOURCE_DIR; }
inline std::string config(const std::string& name) { return root() + "/configs/" + name; }
inline std::string golden(const std::string& name) { return root() + "/tests/golden/" + name; }

} // namespace test_paths
