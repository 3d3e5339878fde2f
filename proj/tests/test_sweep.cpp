#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "icc/error.hpp"
#include "icc/ranking.hpp"
#include "icc/sweep.hpp"

using namespace icc;
using namespace icc::sweep;
using nlohmann::json;

namespace {

json tiny_grid() {
    return json::parse(R"({
      "data": {"n_superclasses": 2, "subclasses_per_superclass": 2, "samples_per_subclass": 6,
               "test_samples_per_subclass": 4, "input_dim": 4, "seed": 1},
      "base": {"depth": 2, "width": 6, "epochs": 4, "batch_size": 8, "seed": 3},
      "measure": {"k_neuron": 2},
      "axes": [{"name": "width", "values": [4, 8]}, {"name": "learning_rate", "values": [0.01, 0.1]}]
    })");
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Grid, ParseAndExpand) {
    const auto g = grid_from_json(tiny_grid());
    ASSERT_EQ(g.axes.size(), 2u);
    const auto pts = expand_grid(g);
    ASSERT_EQ(pts.size(), 4u);
    EXPECT_EQ(pts[0].model_id, "m000");
    EXPECT_EQ(pts[3].model_id, "m003");
    EXPECT_EQ(pts[0].config.width, 4u);
    EXPECT_EQ(pts[1].config.width, 4u);
    EXPECT_EQ(pts[2].config.width, 8u);
    EXPECT_EQ(pts[1].labels.at("learning_rate"), "0.1");
    EXPECT_EQ(pts[1].config.learning_rate, 0.1);
    EXPECT_EQ(pts[0].config.epochs, 4u);
    EXPECT_EQ(grid_from_json(to_json(g)).axes.size(), 2u);
}

TEST(Grid, SingleAxisTable) {
    auto j = tiny_grid();
    j["axes"] = json::array({{{"name", "width"}, {"values", {4, 8}}}});
    const auto r = run_sweep(grid_from_json(j), 1);
    EXPECT_EQ(r.table.axes, (std::vector<std::string>{"width"}));
    EXPECT_EQ(r.table.records.size(), 2u);
    EXPECT_NO_THROW(r.table.validate());
}

TEST(Grid, CoupledAxisLabels) {
    auto j = tiny_grid();
    j["axes"] = json::array({{{"name", "capacity"}, {"params", {"depth", "width"}}, {"values", {{1, 4}, {2, 8}}}}});
    const auto pts = expand_grid(grid_from_json(j));
    ASSERT_EQ(pts.size(), 2u);
    EXPECT_EQ(pts[0].labels.at("capacity"), "1/4");
    EXPECT_EQ(pts[1].config.depth, 2u);
    EXPECT_EQ(pts[1].config.width, 8u);
}

TEST(Grid, Errors) {
    auto j = tiny_grid();
    j["axes"] = json::array();
    EXPECT_THROW(grid_from_json(j), ValidationError);
    j = tiny_grid();
    j["axes"][0]["values"] = {4, 4};
    EXPECT_THROW(grid_from_json(j), ValidationError);
    j = tiny_grid();
    j["axes"][1]["name"] = "width";
    EXPECT_THROW(grid_from_json(j), ValidationError);
    j = tiny_grid();
    j["extra"] = 1;
    EXPECT_THROW(grid_from_json(j), FormatError);
    j = tiny_grid();
    j["axes"] = "width";
    EXPECT_THROW(grid_from_json(j), FormatError);
    j = tiny_grid();
    j["axes"][0]["name"] = "nonexistent_key";
    EXPECT_THROW(expand_grid(grid_from_json(j)), FormatError);
}

TEST(Sweep, DeterministicAcrossRunsAndThreads) {
    const auto g = grid_from_json(tiny_grid());
    fixture::TempDir a("sweep_a"), b("sweep_b");
    write_sweep(run_sweep(g, 1), a.path());
    write_sweep(run_sweep(g, 3), b.path());
    const auto csv = slurp(a / "sweep_table.csv");
    EXPECT_FALSE(csv.empty());
    EXPECT_EQ(csv, slurp(b / "sweep_table.csv"));
    EXPECT_EQ(slurp(a / "sweep_table.json"), slurp(b / "sweep_table.json"));
    EXPECT_EQ(slurp(a / "models/m002/manifest.json"), slurp(b / "models/m002/manifest.json"));
    const auto t = ranking::table_from_csv(csv);
    EXPECT_EQ(t.records.size(), 4u);
    for (const char* m : {"c1", "c2", "c3", "c4"}) EXPECT_TRUE(t.records[0].measures.count(m));
    EXPECT_TRUE(std::filesystem::exists(a / "sweep_summary.json"));
    EXPECT_FALSE(std::filesystem::exists(a / "curves.json"));
}

TEST(Sweep, DumpsMatchTableAndStore) {
    const auto g = grid_from_json(tiny_grid());
    const auto r = run_sweep(g, 2);
    ASSERT_EQ(r.dumps.size(), 4u);
    EXPECT_TRUE(r.failures.empty());
    fixture::TempDir dir("sweep_dumps");
    write_sweep(r, dir.path());
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(r.dumps[i].model_id, r.table.records[i].model_id);
        EXPECT_EQ(store::load_dump(dir / ("models/" + r.dumps[i].model_id)), r.dumps[i]);
        const auto m = measures::compute_measures(r.dumps[i], g.measure);
        EXPECT_EQ(*m.c3, r.table.records[i].measures.at("c3"));
    }
}

TEST(Sweep, FailuresAreCollected) {
    auto j = tiny_grid();
    j["axes"][1]["values"] = {0.01, 1e300};
    j["base"]["weight_decay"] = 1e-3;
    const auto r = run_sweep(grid_from_json(j), 2);
    EXPECT_EQ(r.table.records.size(), 2u);
    ASSERT_EQ(r.failures.size(), 2u);
    EXPECT_EQ(r.failures[0].model_id, "m001");
    EXPECT_NE(r.failures[0].message.find("diverged"), std::string::npos);
}

TEST(Sweep, CurvesRoundTrip) {
    auto j = tiny_grid();
    j["curves"] = true;
    const auto r = run_sweep(grid_from_json(j), 1);
    ASSERT_EQ(r.curves.size(), 4u);
    const auto& c = r.curves.at("m000");
    EXPECT_EQ(c.front().epoch, 0u);
    EXPECT_EQ(c.back().epoch, 4u);
    EXPECT_TRUE(c.back().c3.has_value());
    const auto back = curves_from_json(curves_to_json(r.curves));
    EXPECT_EQ(curves_to_json(back), curves_to_json(r.curves));
}
