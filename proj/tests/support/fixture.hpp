#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>

#include "xp/dsl.hpp"

namespace xp::testing {

namespace fs = std::filesystem;

inline std::string stub() { return XP_STUB_TASK; }

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    for (int attempt = 0; attempt < 100; ++attempt) {
      path_ = fs::temp_directory_path() / ("xp-test-" + std::to_string(rd()));
      if (fs::create_directory(path_)) return;
    }
    throw std::runtime_error("cannot create temp dir");
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << content;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct FixtureBlocks {
  std::string strategy = "strategy grid;";
  std::string constraints;
  std::string interaction;
  std::string monitor;
};

/// The five-task chain: three model implementations x three learning rates,
/// with the stub reporting accuracy from a fixed table.
inline std::string motivating_source(const std::string& name, const FixtureBlocks& b = {}) {
  const std::string s = stub();
  return "experiment " + name + " {\n"
         "  intent maximize accuracy;\n"
         "  workflow {\n"
         "    task read_data impl \"" + s + " ok\" inputs(data=\"data.csv\");\n"
         "    task add_padding impl \"" + s + " ok\";\n"
         "    task split_data impl \"" + s + " ok\";\n"
         "    task train_model abstract params(lr=0.01);\n"
         "    task evaluate_model impl \"" + s + " ok\";\n"
         "    read_data -> add_padding -> split_data -> train_model -> evaluate_model;\n"
         "  }\n"
         "  variability {\n"
         "    vp model: impl(train_model) in {\"" + s + " table --algo snn\", \"" + s +
         " table --algo rnn\", \"" + s + " table --algo cnn\"};\n"
         "    vp lr: param(train_model.lr) in {0.001, 0.01, 0.1};\n"
         "  }\n"
         "  " + b.strategy + "\n"
         "  metrics {\n"
         "    metric accuracy output(train_model);\n"
         "  }\n" +
         (b.constraints.empty() ? "" : "  constraints {\n    " + b.constraints + "\n  }\n") +
         (b.interaction.empty() ? "" : "  interaction {\n    " + b.interaction + "\n  }\n") +
         (b.monitor.empty() ? "" : "  monitor {\n    " + b.monitor + "\n  }\n") + "}\n";
}

inline ExperimentSpec parse_or_throw(const std::string& source) {
  auto result = parse_experiment(source);
  if (auto* errors = std::get_if<std::vector<SourceError>>(&result))
    throw std::runtime_error("fixture does not parse: " + errors->front().to_string());
  return std::get<ExperimentSpec>(result);
}

/// Spec plus a data file next to it.
inline ExperimentSpec motivating_spec(const fs::path& dir, const std::string& name, const FixtureBlocks& b = {}) {
  if (!fs::exists(dir / "data.csv")) write_file(dir / "data.csv", "x,y\n1,0\n2,1\n3,0\n");
  return parse_or_throw(motivating_source(name, b));
}

}  // namespace xp::testing
