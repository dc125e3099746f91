#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

namespace testutil {

// Fresh scratch directory, unique per test.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  const char* base = std::getenv("HSCALE_TMP");
  std::filesystem::path root = base ? base : std::filesystem::temp_directory_path() / "hscale-tests";
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  std::filesystem::path dir = root / (std::string(info->test_suite_name()) + "." + info->name() + "." + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir.parent_path());
  return dir;
}

}  // namespace testutil
