#pragma once

#include <filesystem>
#include <string>

#include "rfadv/net.hpp"
#include "rfadv/sig.hpp"

namespace rfadv::fixture {

/// Small but competent classifier shared by the attack and eval tests.
struct Fixture {
  sig::DatasetPair data;
  net::Model model;
};

inline net::ModelArch small_arch() {
  net::ModelArch a;
  a.conv1_filters = 8;
  a.conv2_filters = 8;
  a.dense = 32;
  return a;
}

inline const Fixture &trained_fixture() {
  static const Fixture fx = [] {
    Fixture f;
    sig::DatasetConfig dc;
    dc.frames_per_class = 300;
    dc.seed = 77;
    f.data = sig::build_dataset(dc);
    net::TrainConfig tc;
    tc.epochs = 8;
    tc.seed = 5;
    f.model = net::train(net::init_model(small_arch(), 5), f.data.train, tc).model;
    return f;
  }();
  return fx;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string &tag) {
    path = std::filesystem::temp_directory_path() /
           ("rfadv-" + tag + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string operator/(const std::string &name) const { return (path / name).string(); }
};

} // namespace rfadv::fixture
