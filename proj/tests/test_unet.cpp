#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "apm/rng.hpp"
#include "apm/unet.hpp"
#include "test_util.hpp"

using namespace apm;
using testutil::random_vec;

namespace {

// Independent parameter count for the default architecture, written out as
// the explicit layer list rather than derived from the registry code.
std::size_t default_param_count_oracle() {
  const std::vector<std::pair<int, int>> convs = {
      {3, 8},  {8, 8},    // enc0
      {8, 16}, {16, 16},  // enc1
      {16, 32}, {32, 32},  // bottleneck
      {48, 16}, {16, 16},  // dec1 (32 upsampled + 16 skip)
      {24, 8},  {8, 8},    // dec0 (16 upsampled + 8 skip)
      {8, 3},              // final
  };
  std::size_t total = 0;
  for (auto [cin, cout] : convs)
    total += static_cast<std::size_t>(cout) * cin * 9 + cout;
  return total;
}

}  // namespace

TEST_CASE("registry: default config parameter count is pinned") {
  UNet net({});
  CHECK(net.registry().total_len() == default_param_count_oracle());
  CHECK(net.registry().total_len() == 29971);
}

TEST_CASE("registry: offsets are contiguous and non-overlapping") {
  for (int depth : {1, 2, 3}) {
    UNetConfig cfg;
    cfg.depth = depth;
    auto reg = ParameterRegistry::for_config(cfg);
    std::size_t expect = 0, sum = 0;
    for (const auto& e : reg.entries()) {
      CHECK(e.offset == expect);
      std::size_t numel = 1;
      for (int d : e.shape) numel *= static_cast<std::size_t>(d);
      CHECK(e.len == numel);
      expect += e.len;
      sum += e.len;
    }
    CHECK(reg.total_len() == sum);
  }
}

TEST_CASE("registry: identical configs give identical registries") {
  UNetConfig cfg;
  cfg.seed = 99;
  auto a = ParameterRegistry::for_config(cfg);
  auto b = ParameterRegistry::for_config(cfg);
  REQUIRE(a.entries().size() == b.entries().size());
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    CHECK(a.entries()[i].name == b.entries()[i].name);
    CHECK(a.entries()[i].offset == b.entries()[i].offset);
    CHECK(a.entries()[i].shape == b.entries()[i].shape);
  }
}

TEST_CASE("build: minimal network keeps the shape contract") {
  UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 1;
  UNet net(cfg);
  auto params = net.init_params();
  Rng rng(20);
  Tensor x = Tensor::from_data({1, 3, 2, 2}, random_vec(rng, 12, 0.0, 1.0));
  auto result = net.forward(x, params, false);
  CHECK(result.output.shape() == std::vector<int>{1, 3, 2, 2});
}

TEST_CASE("build: same seed gives bit-identical parameters") {
  UNetConfig cfg;
  cfg.seed = 1234;
  auto p1 = UNet(cfg).init_params();
  auto p2 = UNet(cfg).init_params();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);

  cfg.seed = 1235;
  auto p3 = UNet(cfg).init_params();
  int differing = 0;
  for (std::size_t i = 0; i < p1.size(); ++i)
    if (p1[i] != p3[i]) ++differing;
  CHECK(differing > 0);
}

TEST_CASE("build: invalid configs are rejected") {
  UNetConfig cfg;
  cfg.depth = 0;
  CHECK_THROWS_AS(UNet{cfg}, ConfigError);
  cfg = {};
  cfg.base_channels = 0;
  CHECK_THROWS_AS(UNet{cfg}, ConfigError);
  cfg = {};
  cfg.residual = true;
  cfg.out_channels = 1;
  CHECK_THROWS_AS(UNet{cfg}, ConfigError);
}

TEST_CASE("forward: zero parameters give zero output") {
  UNet net({});
  std::vector<double> zeros(net.registry().total_len(), 0.0);
  Rng rng(21);
  Tensor x = Tensor::from_data({1, 3, 8, 8}, random_vec(rng, 3 * 64, 0.0, 1.0));
  auto result = net.forward(x, zeros, false);
  for (double v : result.output.values()) CHECK(v == 0.0);
}

TEST_CASE("forward: shape contract and determinism at default config") {
  UNet net({});
  auto params = net.init_params();
  Rng rng(22);
  Tensor x = Tensor::from_data({2, 3, 32, 32},
                               random_vec(rng, 2 * 3 * 32 * 32, 0.0, 1.0));
  auto r1 = net.forward(x, params, false);
  CHECK(r1.output.shape() == std::vector<int>{2, 3, 32, 32});
  auto r2 = net.forward(x, params, false);
  for (std::int64_t i = 0; i < r1.output.size(); ++i)
    CHECK(r1.output.values()[i] == r2.output.values()[i]);
}

TEST_CASE("forward: bad parameter length and indivisible dims are rejected") {
  UNet net({});
  auto params = net.init_params();
  Tensor x = Tensor::zeros({1, 3, 32, 32});
  std::vector<double> short_params(params.begin(), params.end() - 1);
  CHECK_THROWS_AS(net.forward(x, short_params, false), ShapeError);
  Tensor odd = Tensor::zeros({1, 3, 30, 30});
  CHECK_THROWS_AS(net.forward(odd, params, false), ShapeError);
  Tensor wrongc = Tensor::zeros({1, 4, 32, 32});
  CHECK_THROWS_AS(net.forward(wrongc, params, false), ShapeError);
}

TEST_CASE("registry round trip: leaves reproduce the flat vector bit-exactly") {
  UNet net({});
  Rng rng(23);
  auto params = random_vec(rng, net.registry().total_len());
  Tensor x = Tensor::zeros({1, 3, 8, 8});
  auto result = net.forward(x, params, false);
  const auto& entries = net.registry().entries();
  REQUIRE(result.param_leaves.size() == entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto vals = result.param_leaves[i].values();
    REQUIRE(vals.size() == entries[i].len);
    for (std::size_t j = 0; j < vals.size(); ++j)
      CHECK(vals[j] == params[entries[i].offset + j]);
  }
}

TEST_CASE("registry addressing is live: single-scalar swaps move the output") {
  // Random He-initialized nets contain genuinely dead relu channels, which
  // would hide a swap behind a unit no input activates. An all-positive
  // parameter vector keeps every relu strictly active, so a swap at ANY flat
  // index must reach the output unless the registry maps it to dead storage.
  UNet net({});
  Rng rng(24);
  std::vector<double> params(net.registry().total_len());
  for (double& p : params) p = rng.uniform(0.05, 0.3);
  Tensor x = Tensor::from_data({1, 3, 8, 8}, random_vec(rng, 3 * 64, 0.2, 1.0));
  auto baseline = net.forward(x, params, false);

  int moved = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t idx = rng.below(static_cast<std::uint32_t>(params.size()));
    auto perturbed = params;
    perturbed[idx] += 0.5;
    auto result = net.forward(x, perturbed, false);
    for (std::int64_t i = 0; i < result.output.size(); ++i)
      if (result.output.values()[i] != baseline.output.values()[i]) {
        ++moved;
        break;
      }
  }
  CHECK(moved == 100);
}

TEST_CASE("gradients flow to every layer on a generic batch") {
  UNet net({});
  auto params = net.init_params();
  Rng rng(25);
  Tensor x = Tensor::from_data({1, 3, 8, 8}, random_vec(rng, 3 * 64, 0.0, 1.0));
  auto result = net.forward(x, params, true);
  mean(result.output).backward();
  auto grads = net.collect_gradients(result);
  REQUIRE(grads.size() == params.size());
  // every bias of the final layer must receive gradient
  const auto& entries = net.registry().entries();
  const auto& final_bias = entries.back();
  CHECK(final_bias.name == "final.bias");
  for (std::size_t i = 0; i < final_bias.len; ++i)
    CHECK(grads[final_bias.offset + i] != 0.0);
}

TEST_CASE("residual mode adds the input back") {
  UNetConfig cfg;
  cfg.residual = true;
  UNet net(cfg);
  std::vector<double> zeros(net.registry().total_len(), 0.0);
  Rng rng(26);
  auto xdata = random_vec(rng, 3 * 64, 0.0, 1.0);
  Tensor x = Tensor::from_data({1, 3, 8, 8}, xdata);
  auto result = net.forward(x, zeros, false);
  for (std::size_t i = 0; i < xdata.size(); ++i)
    CHECK(result.output.values()[i] == xdata[i]);
}
