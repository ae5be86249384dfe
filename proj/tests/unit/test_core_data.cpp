#include <cmath>
#include <map>

#include "doctest.h"
#include "pimoe/core_data.hpp"
#include "pimoe/error.hpp"
#include "pimoe/rng.hpp"
#include "pimoe/synthgen.hpp"
#include "support/test_support.hpp"

using namespace pimoe;

namespace {

// Dataset of `counts[g]` single-cycle batteries in condition group g.
Dataset grouped_dataset(const std::vector<std::size_t>& counts) {
  Dataset ds;
  ds.name = "groups";
  for (std::size_t g = 0; g < counts.size(); ++g) {
    const ConditionTriple cond{0.5 + 0.5 * static_cast<double>(g), 1.0, 25.0};
    for (std::size_t i = 0; i < counts[g]; ++i) {
      BatterySeries b = testing::linear_series(
          "g" + std::to_string(g) + "-" + std::to_string(i), {3000.0, 2990.0});
      for (auto& c : b.cycles) c.condition = cond;
      b.condition_tag = condition_tag_for(b.chemistry, cond);
      ds.batteries.push_back(std::move(b));
    }
  }
  return ds;
}

std::map<std::string, std::size_t> count_by_tag(const Dataset& ds, const std::set<std::string>& ids) {
  std::map<std::string, std::size_t> out;
  for (const auto& b : ds.batteries) {
    if (ids.contains(b.battery_id)) ++out[b.condition_tag];
  }
  return out;
}

}  // namespace

TEST_CASE("condition triple validation") {
  CHECK_NOTHROW(validate(ConditionTriple{1.0, 1.0, 25.0}));
  CHECK_THROWS_AS(validate(ConditionTriple{0.0, 1.0, 25.0}), Error);
  CHECK_THROWS_AS(validate(ConditionTriple{1.0, -1.0, 25.0}), Error);
  CHECK_THROWS_AS(validate(ConditionTriple{1.0, 1.0, NAN}), Error);
}

TEST_CASE("condition tag naming") {
  CHECK(condition_tag_for(Chemistry::NCA, {0.5, 1.0, 45.0}) == "NCA-45-05-1");
  CHECK(condition_tag_for(Chemistry::NCM, {2.0, 1.0, 25.0}) == "NCM-25-2-1");
  CHECK(chemistry_from_string(to_string(Chemistry::NCMNCA)) == Chemistry::NCMNCA);
}

TEST_CASE("trapezoidal charge integration") {
  std::vector<ChargePoint> pts = {{0.0, 3.0, 1.0, 0.0}, {3600.0, 3.5, 1.0, 0.0},
                                  {7200.0, 4.0, 3.0, 0.0}};
  integrate_charge(pts);
  CHECK(pts[0].cumulative_mAh == 0.0);
  CHECK(pts[1].cumulative_mAh == doctest::Approx(1000.0));
  CHECK(pts[2].cumulative_mAh == doctest::Approx(3000.0));
}

TEST_CASE("series validation") {
  BatterySeries b = testing::linear_series("a", {3000, 2990, 2980});
  CHECK_NOTHROW(validate(b));
  b.cycles[2].cycle_index = 2;
  CHECK_THROWS_AS(validate(b), Error);

  Dataset ds;
  ds.batteries = {testing::linear_series("a", {3000}), testing::linear_series("a", {3000})};
  CHECK_THROWS_AS(validate(ds), Error);
}

TEST_CASE("partition: per-group ceil oracle over fractions") {
  const Dataset ds = grouped_dataset({5, 7, 12, 1, 3});
  const SplitSpec full = partition_dataset(ds, 1.0, 11);
  const auto full_train = count_by_tag(ds, full.train_ids);
  for (double f : {0.1, 0.2, 0.25, 0.4, 0.5, 0.7, 0.9, 1.0}) {
    const SplitSpec s = partition_dataset(ds, f, 11);
    CHECK(s.test_ids == full.test_ids);
    CHECK(s.val_ids == full.val_ids);
    const auto got = count_by_tag(ds, s.train_ids);
    for (const auto& [tag, n] : full_train) {
      const auto expected = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9));
      const std::size_t have = got.contains(tag) ? got.at(tag) : 0;
      CHECK_MESSAGE(have == expected, tag << " f=" << f);
    }
    for (const auto& id : s.train_ids) {
      CHECK(full.train_ids.contains(id));
      CHECK_FALSE(s.test_ids.contains(id));
      CHECK_FALSE(s.val_ids.contains(id));
    }
  }
}

TEST_CASE("partition: 5 batteries at 0.4 keep 2") {
  PartitionOptions none{0.0, 0.0};
  const Dataset ds = grouped_dataset({5});
  CHECK(partition_dataset(ds, 0.4, 3, none).train_ids.size() == 2);
  CHECK(partition_dataset(ds, 1.0, 3, none).train_ids.size() == 5);
}

TEST_CASE("partition: nested subsets, determinism, errors") {
  const Dataset ds = grouped_dataset({9, 6});
  const SplitSpec a = partition_dataset(ds, 0.3, 5);
  const SplitSpec b = partition_dataset(ds, 0.6, 5);
  for (const auto& id : a.train_ids) CHECK(b.train_ids.contains(id));
  const SplitSpec again = partition_dataset(ds, 0.3, 5);
  CHECK(again.train_ids == a.train_ids);
  CHECK(again.test_ids == a.test_ids);

  try {
    partition_dataset(Dataset{}, 1.0, 0);
    FAIL("expected InvalidDataset");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidDataset);
  }
  for (double bad : {0.0, -0.1, 1.5}) {
    try {
      partition_dataset(ds, bad, 0);
      FAIL("expected InvalidArgument");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidArgument);
    }
  }
}

TEST_CASE("dataset summary") {
  CHECK(dataset_summary(Dataset{}).empty());

  SynthConfig cfg;
  cfg.n_batteries = 12;
  cfg.schedule.conditions = {{1.0, 1.0, 25.0}, {0.5, 1.0, 35.0}};
  const SynthFleet fleet = gen_fleet(cfg);
  const auto rows = dataset_summary(fleet.dataset);
  REQUIRE(rows.size() == 2);
  std::size_t total = 0;
  for (const auto& row : rows) {
    total += row.n_batteries;
    std::size_t lo = SIZE_MAX, hi = 0, cycles = 0, n = 0;
    for (const auto& b : fleet.dataset.batteries) {
      if (b.condition_tag != row.condition_tag) continue;
      lo = std::min(lo, b.cycles.size());
      hi = std::max(hi, b.cycles.size());
      cycles += b.cycles.size();
      ++n;
    }
    CHECK(row.n_batteries == n);
    CHECK(row.min_cycles == lo);
    CHECK(row.max_cycles == hi);
    CHECK(row.mean_cycles == doctest::Approx(static_cast<double>(cycles) / static_cast<double>(n)));
  }
  CHECK(total == 12);
}

TEST_CASE("rng streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c = derive_stream(1, "x", 0);
  Rng d = derive_stream(1, "x", 1);
  CHECK(c.next_u64() != d.next_u64());

  Rng e(7);
  e.normal();
  const std::string state = e.serialize();
  const double next = e.normal();
  Rng f;
  f.deserialize(state);
  CHECK(f.normal() == next);
}
