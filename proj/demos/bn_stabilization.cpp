// Same representation, three per-feature rescalings, three probe recipes.
// Prints the accuracy grid with and without a BatchNorm layer in the probe.
//
//   ./bn_stabilization [epochs]

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "sslprobe/catalog.hpp"
#include "sslprobe/harness.hpp"
#include "sslprobe/synthetic.hpp"

using namespace sslprobe;

int main(int argc, char** argv) {
  const std::size_t epochs = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 20;
  const SyntheticSpec spec{4000, 1000, 64, 10, 12, 2.0, 1.0, 7};
  const auto base = make_synthetic(spec);

  std::vector<FeatureSet> sets;
  const double ranges[][3] = {{-3, -1, 20}, {1, 2, 0}, {-0.5, 0.5, 2}};
  for (std::size_t v = 0; v < 3; ++v) {
    const auto d = make_affine_distortion(spec.dims, ranges[v][0], ranges[v][1], ranges[v][2], 100 + v);
    sets.push_back({"variant" + std::to_string(v), apply_affine(base.train, d), apply_affine(base.val, d)});
  }

  for (bool bn : {false, true}) {
    std::vector<NamedSetting> settings;
    for (const char* name : {"dino", "mocov3", "mae"}) {
      auto c = named_setting(name);
      c.use_bn = bn;
      settings.push_back({std::string(name) + (bn ? "+bn" : ""), c});
    }
    const auto grid = run_cross_settings(sets, settings, {epochs, 256}, {1, 1});
    std::cout << (bn ? "\nwith BatchNorm\n" : "without BatchNorm\n");
    std::cout << format_report_table(grid, stability_report(grid));
  }
}
