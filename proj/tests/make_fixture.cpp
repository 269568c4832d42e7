// Writes a small synthetic dataset and run config for the CLI smoke test.
//   make_fixture <dir>

#include <fstream>
#include <iostream>

#include "fixtures.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixture <dir>\n";
    return 1;
  }
  const testsupport::fs::path dir = argv[1];
  testsupport::SyntheticSpec spec;
  spec.clips = 12;
  spec.noise = 0.3;
  const auto dataset = testsupport::write_synthetic_dataset(dir / "data", spec);
  const nlohmann::json config = {{"ks", {1, 5, 10}}, {"output_dir", "out"}, {"datasets", {dataset}}};
  std::ofstream(dir / "run.json") << config.dump(2) << '\n';
  return 0;
}
