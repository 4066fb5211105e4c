#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include <gtest/gtest.h>

#include "medfocus/error.hpp"

namespace medfocus::test {

inline void expect_error(ErrorKind kind, const std::function<void()>& f) {
  try {
    f();
    ADD_FAILURE() << "expected " << to_string(kind) << ", nothing was thrown";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

/// Fresh, empty directory under the system temp dir, named after the running test.
inline std::filesystem::path temp_dir(const std::string& tag) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  std::string name = "medfocus_" + tag;
  if (info) name += std::string("_") + info->test_suite_name() + "_" + info->name();
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace medfocus::test
