#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sigmafit/io.hpp>

#include <sstream>

using namespace sigmafit;

namespace {

io::MatchFile sample_file() {
    io::MatchFile file;
    io::MatchPair pair;
    pair.id = "pair0";
    pair.matches.pts_a = {{0.1, 2.0}, {3.5, -4.25}, {1e-17, 123456.789}};
    pair.matches.pts_b = {{10.0, 20.0}, {30.103, 40.0}, {0.30000000000000004, -1.0}};
    pair.matches.intrinsics_a = CameraIntrinsics{800.0, 799.5, 400.25, 300.0, 0.0};
    pair.matches.intrinsics_b = CameraIntrinsics{780.0, 781.0, 399.0, 301.5, 0.1};
    file.pairs.push_back(pair);
    return file;
}

}  // namespace

TEST_CASE("match file save/load round trip is byte-identical") {
    const auto file = sample_file();
    std::ostringstream first;
    io::save_matches(first, file);

    std::istringstream in(first.str());
    const auto loaded = io::load_matches(in);
    REQUIRE(loaded.pairs.size() == 1);
    CHECK(loaded.pairs[0].id == "pair0");
    CHECK(loaded.pairs[0].matches.size() == 3);
    CHECK(loaded.pairs[0].matches.pts_a[2].x == 1e-17);
    CHECK(loaded.pairs[0].matches.pts_b[2].x == 0.30000000000000004);
    REQUIRE(loaded.pairs[0].matches.has_intrinsics());
    CHECK(loaded.pairs[0].matches.intrinsics_b->skew == 0.1);

    std::ostringstream second;
    io::save_matches(second, loaded);
    CHECK(first.str() == second.str());
}

TEST_CASE("match file without intrinsics") {
    io::MatchFile file;
    io::MatchPair pair;
    pair.id = "uncalibrated";
    pair.matches.pts_a = {{1, 2}, {3, 4}};
    pair.matches.pts_b = {{5, 6}, {7, 8}};
    file.pairs.push_back(pair);

    std::ostringstream out;
    io::save_matches(out, file);
    std::istringstream in(out.str());
    const auto loaded = io::load_matches(in);
    REQUIRE(loaded.pairs.size() == 1);
    CHECK(!loaded.pairs[0].matches.has_intrinsics());
}

TEST_CASE("count mismatch names the pair") {
    std::string text = std::string("{\"schema\":\"") + io::kMatchesSchema + "\"}\n" +
                       R"({"id":"bad-pair","pts_a":[[1,2],[3,4]],"pts_b":[[5,6]]})" + "\n";
    std::istringstream in(text);
    try {
        io::load_matches(in);
        FAIL("expected ValidationError");
    } catch (const io::ValidationError& e) {
        CHECK(std::string(e.what()).find("bad-pair") != std::string::npos);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("lenient mode rejects pairs individually") {
    std::string text = std::string("{\"schema\":\"") + io::kMatchesSchema + "\"}\n" +
                       R"({"id":"bad","pts_a":[[1,2]],"pts_b":[]})" + "\n" +
                       R"({"id":"good","pts_a":[[1,2]],"pts_b":[[3,4]]})" + "\n";
    std::istringstream in(text);
    std::vector<std::string> rejected;
    const auto loaded = io::load_matches(in, false, &rejected);
    CHECK(loaded.pairs.size() == 1);
    CHECK(loaded.pairs[0].id == "good");
    REQUIRE(rejected.size() == 1);
    CHECK(rejected[0].find("bad") != std::string::npos);
}

TEST_CASE("malformed records carry line numbers") {
    std::string text = std::string("{\"schema\":\"") + io::kMatchesSchema + "\"}\n" +
                       "{not json}\n";
    std::istringstream in(text);
    try {
        io::load_matches(in);
        FAIL("expected ParseError");
    } catch (const io::ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    std::istringstream bad_header("{\"schema\":\"something-else\"}\n");
    CHECK_THROWS_AS(io::load_matches(bad_header), io::ParseError);
    std::istringstream empty("");
    CHECK_THROWS_AS(io::load_matches(empty), io::ParseError);
}

TEST_CASE("one-sided intrinsics are rejected") {
    std::string text = std::string("{\"schema\":\"") + io::kMatchesSchema + "\"}\n" +
                       R"({"id":"half","pts_a":[[1,2]],"pts_b":[[3,4]],)" +
                       R"("K_a":[[800,0,400],[0,800,300],[0,0,1]],"K_b":null})" + "\n";
    std::istringstream in(text);
    CHECK_THROWS_AS(io::load_matches(in), io::ValidationError);
}

TEST_CASE("results csv: schema line, column order, explicit nulls") {
    io::ResultRow row;
    row.pair_id = "p1";
    row.method = "simfitpp";
    row.tau0 = 4.0;
    row.tau_star = 2.5758;
    row.sigma_hat = 1.0;
    row.converged = true;
    row.n_inliers = 350;
    // rot/trans/runtime stay null
    io::ResultRow failed;
    failed.pair_id = "p2";
    failed.method = "simfit";
    failed.tau0 = 1.0;
    failed.error = "estimation failed, with \"quotes\", and commas";

    std::ostringstream out;
    io::write_results_csv(out, std::vector<io::ResultRow>{row, failed});
    std::istringstream lines(out.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == std::string("# ") + io::kResultsSchema);
    std::getline(lines, line);
    CHECK(line == io::kResultsHeader);
    std::getline(lines, line);
    CHECK(line == "p1,simfitpp,4,2.5758,1,true,350,null,null,null,");
    std::getline(lines, line);
    CHECK(line == "p2,simfit,1,null,null,false,null,null,null,null,"
                  "\"estimation failed, with \"\"quotes\"\", and commas\"");
}

TEST_CASE("cells csv and manifest formats") {
    io::CellRow cell;
    cell.method = "fixed";
    cell.tau0 = 2.0;
    cell.n_scenes = 200;
    cell.n_failed = 1;
    cell.auc5 = 0.5;
    cell.auc10 = 0.625;
    cell.auc20 = 0.75;

    std::ostringstream out;
    io::write_cells_csv(out, std::vector<io::CellRow>{cell});
    std::istringstream lines(out.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == std::string("# ") + io::kCellsSchema);
    std::getline(lines, line);
    CHECK(line == io::kCellsHeader);
    std::getline(lines, line);
    CHECK(line == "fixed,2,200,1,0.5,0.625,0.75,null,null,null,null,null");

    io::Manifest manifest;
    manifest["seed"] = "42";
    manifest["alpha"] = "0.99";
    manifest["command"] = "estimate";
    std::ostringstream mout;
    io::write_manifest(mout, manifest);
    CHECK(mout.str() == std::string("# ") + io::kManifestSchema +
                            "\nalpha = 0.99\ncommand = estimate\nseed = 42\n");
}

TEST_CASE("format_double is canonical and exact") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 0.0, 123456789.123456789}) {
        const std::string s = io::format_double(v);
        CHECK(std::stod(s) == v);
    }
    CHECK(io::format_double(std::numeric_limits<double>::quiet_NaN()) == "null");
    CHECK(io::format_double(2.0) == "2");
}
