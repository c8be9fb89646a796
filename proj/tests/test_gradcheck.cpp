#include "lap/gradcheck.hpp"

#include <gtest/gtest.h>

using namespace lap;

TEST(Gradcheck, EveryCheckPassesAtSeedOne) {
  const auto results = run_gradchecks("", 1);
  EXPECT_GE(results.size(), 20u);
  for (const GradcheckResult& r : results) {
    EXPECT_TRUE(r.passed()) << r.group << "/" << r.name << " rel " << r.rel_error << " scaled " << r.scaled_error;
    EXPECT_GT(r.coordinates, 0) << r.name;
  }
  const std::string table = format_gradcheck_table(results);
  EXPECT_NE(table.find("network"), std::string::npos);
}

TEST(Gradcheck, FilterSelectsGroup) {
  const auto cbam = run_gradchecks("cbam", 1);
  EXPECT_EQ(cbam.size(), 3u);
  for (const GradcheckResult& r : cbam) EXPECT_EQ(r.group, "cbam");
  EXPECT_THROW(run_gradchecks("no-such-group", 1), std::invalid_argument);
}

TEST(Gradcheck, DeterministicForSeed) {
  const auto a = run_gradchecks("layers", 3);
  const auto b = run_gradchecks("layers", 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].rel_error, b[i].rel_error);
}

TEST(Gradcheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0, 0), 0.0);
  EXPECT_EQ(relative_error(2, 1), 0.5);
}
