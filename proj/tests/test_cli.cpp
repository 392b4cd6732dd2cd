#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "pnacc/udp.hpp"

#include "pnacc/pointnet.hpp"
#include "pnacc/velodyne.hpp"
#include "pnacc/weight_container.hpp"
#include "support/oracles.hpp"
#include "support/packets.hpp"

using namespace pnacc;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(PNACC_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CliResult res;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) res.out.append(buf, n);
    const int rc = pclose(pipe);
    res.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return res;
}

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "pnacc_cli_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

std::string kv_value(const std::string& text, const std::string& key) {
    std::istringstream is(text);
    std::string token;
    while (is >> token)
        if (token.rfind(key + "=", 0) == 0) return token.substr(key.size() + 1);
    return {};
}

// Zero-weight vanilla network whose scores come entirely from the final FC
// bias: every activation before the head is relu(0) = 0, so
// scores = fc3.bias exactly (bias codes are exact at frac 4+7).
WeightSet toy_bias_network_weights(const NetworkGraph& g) {
    WeightSet ws;
    for (const Layer& l : g.layers) {
        if (l.kind != LayerKind::SharedMLP && l.kind != LayerKind::FC) continue;
        FloatTensor w;
        w.dims = {l.in_dim, l.out_dim};
        w.values.assign(static_cast<std::size_t>(l.in_dim * l.out_dim), 0.0);
        ws.tensors.emplace(l.name + ".weight", std::move(w));
    }
    FloatTensor bias;
    bias.dims = {4};
    bias.values = {0.25, 0.5, 0.125, 0.0};
    ws.tensors.emplace("fc3.bias", std::move(bias));
    return ws;
}

}  // namespace

TEST_CASE("quantize: missing input file exits 2") {
    const auto res = run_cli("quantize --in /nonexistent.pnqw --out /tmp/x.pnqw");
    CHECK(res.exit_code == 2);
}

TEST_CASE("quantize: zero tensors produce all-zero codes") {
    const auto dir = temp_dir();
    const auto in = (dir / "zeros_f.pnqw").string();
    const auto out = (dir / "zeros_q.pnqw").string();

    WeightSet ws;
    FloatTensor w;
    w.dims = {4, 3};
    w.values.assign(12, 0.0);
    ws.tensors.emplace("l.weight", std::move(w));
    write_weight_container(in, weight_set_to_entries(ws));

    const auto res = run_cli("quantize --in " + in + " --out " + out + " --bits 8");
    CHECK(res.exit_code == 0);
    const auto qs = entries_to_quantized_set(read_weight_container(out));
    for (const auto& [name, t] : qs.weights)
        for (std::int32_t c : t.codes) CHECK(c == 0);
}

TEST_CASE("quantize: dequantized error stays within half an ulp per tensor") {
    const auto dir = temp_dir();
    const auto in = (dir / "rand_f.pnqw").string();
    const auto out = (dir / "rand_q.pnqw").string();

    std::mt19937_64 rng(3);
    const NetworkGraph g = build_network(NetworkKind::VanillaCls, 16, 8);
    write_weight_container(in, weight_set_to_entries(test::random_weights_for(g, rng)));

    const auto res =
        run_cli("quantize --in " + in + " --out " + out + " --bits 16 --net vanilla-cls");
    REQUIRE(res.exit_code == 0);

    // Re-derive the folded float weights from the same container the CLI read.
    const WeightSet ws = entries_to_weight_set(read_weight_container(in));
    const auto qs = entries_to_quantized_set(read_weight_container(out));
    for (const Layer& l : g.layers) {
        if (l.kind != LayerKind::SharedMLP && l.kind != LayerKind::FC) continue;
        std::vector<double> wv = ws.tensors.at(l.name + ".weight").values;
        std::vector<double> bv = ws.tensors.at(l.name + ".bias").values;
        if (auto bn = ws.bn.find(l.name); bn != ws.bn.end()) {
            FoldedAffine folded = fold_batchnorm(wv, l.in_dim, l.out_dim, bv, bn->second);
            wv = std::move(folded.weight);
        }
        const QTensor& q = qs.weights.at(l.name + ".weight");
        const auto deq = dequantize(q);
        const double half_ulp = std::ldexp(1.0, -q.fmt.frac_bits - 1);
        const double hi = q.fmt.max_code() * q.fmt.scale();
        const double lo = q.fmt.min_code() * q.fmt.scale();
        for (std::size_t i = 0; i < wv.size(); ++i)
            if (wv[i] > lo && wv[i] < hi)
                CHECK(std::abs(deq[i] - wv[i]) <= half_ulp + 1e-12);
    }
}

TEST_CASE("quantize: dimension mismatch against the selected network exits 3") {
    const auto dir = temp_dir();
    const auto in = (dir / "badshape_f.pnqw").string();
    std::mt19937_64 rng(5);
    const NetworkGraph g = build_network(NetworkKind::VanillaCls, 16, 8);
    WeightSet ws = test::random_weights_for(g, rng);
    ws.tensors.at("mlp1.weight").dims = {4, 64};  // 3 -> 4: wrong input dim
    ws.tensors.at("mlp1.weight").values.resize(4 * 64, 0.0);
    write_weight_container(in, weight_set_to_entries(ws));
    const auto res = run_cli("quantize --in " + in + " --out /tmp/q.pnqw --bits 8 --net vanilla-cls");
    CHECK(res.exit_code == 3);
}

TEST_CASE("infer: the 4096-point capacity is enforced with exit 4") {
    const auto dir = temp_dir();
    const auto pts = (dir / "big.csv").string();
    {
        std::ofstream os(pts);
        os << "x,y,z\n";
        for (int i = 0; i < 4097; ++i) os << "0.1,0.2,0.3\n";
    }
    const auto weights = (dir / "toy_q.pnqw").string();
    {
        const NetworkGraph g = build_network(NetworkKind::VanillaCls, 8, 4);
        const auto qs = quantize_weights(g, toy_bias_network_weights(g), 8);
        write_weight_container(weights, quantized_set_to_entries(qs));
    }
    const auto res = run_cli("infer --net vanilla-cls --weights " + weights + " --points " + pts +
                             " --bits 8");
    CHECK(res.exit_code == 4);
}

TEST_CASE("infer: hand-built bias network yields the hand-computed label") {
    const auto dir = temp_dir();
    const auto weights = (dir / "toy2_q.pnqw").string();
    const auto pts = (dir / "toy2.csv").string();
    {
        const NetworkGraph g = build_network(NetworkKind::VanillaCls, 3, 4);
        const auto qs = quantize_weights(g, toy_bias_network_weights(g), 8);
        write_weight_container(weights, quantized_set_to_entries(qs));
        std::ofstream os(pts);
        os << "x,y,z\n0.5,0,0\n0.25,0.25,0\n0.125,0,0.5\n";
    }
    const auto res = run_cli("infer --net vanilla-cls --weights " + weights + " --points " + pts +
                             " --bits 8");
    REQUIRE(res.exit_code == 0);
    CHECK(kv_value(res.out, "class") == "1");
    CHECK(kv_value(res.out, "scores") == "0.25,0.5,0.125,0");
}

TEST_CASE("infer: byte-identical output across repeated runs, report written") {
    const auto dir = temp_dir();
    const auto weights = (dir / "det_q.pnqw").string();
    const auto pts = (dir / "det.csv").string();
    {
        std::mt19937_64 rng(7);
        const NetworkGraph g = build_network(NetworkKind::VanillaCls, 24, 6);
        const auto qs = quantize_weights(g, test::random_weights_for(g, rng), 8);
        write_weight_container(weights, quantized_set_to_entries(qs));
        PointCloudFrame frame;
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        for (int i = 0; i < 24; ++i) frame.points.push_back({unit(rng), unit(rng), unit(rng), 0});
        std::ofstream os(pts);
        os << pointcloud_to_csv(frame, false);
    }
    const auto report = (dir / "det_report.json").string();
    const std::string cmd = "infer --net vanilla-cls --weights " + weights + " --points " + pts +
                            " --bits 8 --report " + report;
    const auto a = run_cli(cmd);
    const auto b = run_cli(cmd);
    REQUIRE(a.exit_code == 0);
    CHECK(a.out == b.out);
    std::ifstream rep(report);
    std::stringstream ss;
    ss << rep.rdbuf();
    CHECK(ss.str().find("\"macs\"") != std::string::npos);
}

TEST_CASE("decode: synthetic revolutions produce frame CSVs and matching counters") {
    const auto dir = temp_dir();
    const auto cap = (dir / "rev.vlpcap").string();
    const auto records = test::synthetic_revolutions(2, 2000);  // 4 m ring
    write_capture(cap, records);

    const auto out_prefix = (dir / "rev_out").string();
    const auto res = run_cli("decode --in " + cap + " --out " + out_prefix + " --cap 1000");
    REQUIRE(res.exit_code == 0);
    CHECK(kv_value(res.out, "frames") == "2");
    CHECK(kv_value(res.out, "decoded_points") == "57600");

    // 4 m straight-ahead ring: the forward half of the sweep lands in the
    // default ROI; subsampling caps each frame at 1000.
    const auto csv0 = parse_pointcloud_csv([&] {
        std::ifstream is(out_prefix + "_000.csv");
        std::stringstream ss;
        ss << is.rdbuf();
        return ss.str();
    }());
    CHECK(csv0.size() == 1000);
    for (const auto& p : csv0) {
        CHECK(p.x >= -10.0);
        CHECK(p.x <= 10.0);
        CHECK(p.y >= 0.0);
    }
}

TEST_CASE("decode: empty capture exits 0 with zero frames") {
    const auto dir = temp_dir();
    const auto cap = (dir / "empty.vlpcap").string();
    write_capture(cap, {});
    const auto res = run_cli("decode --in " + cap + " --out " + (dir / "empty_out").string());
    CHECK(res.exit_code == 0);
    CHECK(kv_value(res.out, "frames") == "0");
}

TEST_CASE("decode: an ROI that excludes everything leaves header-only CSVs") {
    const auto dir = temp_dir();
    const auto cap = (dir / "faroi.vlpcap").string();
    write_capture(cap, test::synthetic_revolutions(2, 2000));
    const auto out_prefix = (dir / "faroi_out").string();
    const auto res =
        run_cli("decode --in " + cap + " --out " + out_prefix + " --roi 90,99,90,99");
    REQUIRE(res.exit_code == 0);
    CHECK(kv_value(res.out, "roi_points") == "0");
    std::ifstream is(out_prefix + "_000.csv");
    std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    CHECK(content == "x,y,z,reflectivity\n");
}

TEST_CASE("decode: bad capture magic exits 2") {
    const auto dir = temp_dir();
    const auto cap = (dir / "notacap.vlpcap").string();
    {
        std::ofstream os(cap, std::ios::binary);
        os << "JUNKJUNK";
    }
    const auto res = run_cli("decode --in " + cap + " --out " + (dir / "x").string());
    CHECK(res.exit_code == 2);
}

TEST_CASE("infer: segmentation writes one label per point") {
    const auto dir = temp_dir();
    const auto weights = (dir / "seg_q.pnqw").string();
    const auto pts = (dir / "seg.csv").string();
    const auto labels = (dir / "seg_labels.csv").string();
    {
        std::mt19937_64 rng(11);
        const NetworkGraph g = build_network(NetworkKind::FullSeg, 16, 0, 5);
        const auto qs = quantize_weights(g, test::random_weights_for(g, rng), 8);
        write_weight_container(weights, quantized_set_to_entries(qs));
        PointCloudFrame frame;
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        for (int i = 0; i < 16; ++i) frame.points.push_back({unit(rng), unit(rng), unit(rng), 0});
        std::ofstream os(pts);
        os << pointcloud_to_csv(frame, false);
    }
    const auto res = run_cli("infer --net seg --weights " + weights + " --points " + pts +
                             " --bits 8 --out " + labels);
    REQUIRE(res.exit_code == 0);
    std::ifstream is(labels);
    std::string line;
    int lines = 0;
    REQUIRE(static_cast<bool>(std::getline(is, line)));
    CHECK(line == "point,label");
    while (std::getline(is, line)) {
        const auto comma = line.find(',');
        REQUIRE(comma != std::string::npos);
        CHECK(std::stoi(line.substr(0, comma)) == lines);
        const int label = std::stoi(line.substr(comma + 1));
        CHECK(label >= 0);
        CHECK(label < 5);
        ++lines;
    }
    CHECK(lines == 16);
}

TEST_CASE("infer: container width must match --bits") {
    const auto dir = temp_dir();
    const auto weights = (dir / "w16.pnqw").string();
    const auto pts = (dir / "w16.csv").string();
    {
        std::mt19937_64 rng(13);
        const NetworkGraph g = build_network(NetworkKind::VanillaCls, 4, 4);
        const auto qs = quantize_weights(g, test::random_weights_for(g, rng), 16);
        write_weight_container(weights, quantized_set_to_entries(qs));
        std::ofstream os(pts);
        os << "0.1,0.2,0.3\n0.4,0.5,0.6\n0.7,0.8,0.9\n0.1,0.1,0.1\n";
    }
    const auto res = run_cli("infer --net vanilla-cls --weights " + weights + " --points " + pts +
                             " --bits 8");
    CHECK(res.exit_code == 3);
}

TEST_CASE("decode: repeated runs write byte-identical frame CSVs") {
    const auto dir = temp_dir();
    const auto cap = (dir / "det.vlpcap").string();
    write_capture(cap, test::synthetic_revolutions(2, 2000));
    const auto p1 = (dir / "det_a").string();
    const auto p2 = (dir / "det_b").string();
    REQUIRE(run_cli("decode --in " + cap + " --out " + p1 + " --cap 500 --seed 3").exit_code == 0);
    REQUIRE(run_cli("decode --in " + cap + " --out " + p2 + " --cap 500 --seed 3").exit_code == 0);
    for (const char* suffix : {"_000.csv", "_001.csv"}) {
        std::ifstream a(p1 + suffix, std::ios::binary), b(p2 + suffix, std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        REQUIRE(!sa.empty());
        CHECK(sa == sb);
    }
}

TEST_CASE("decode: a UDP source feeds the same pipeline") {
    const auto dir = temp_dir();
    const auto records = test::synthetic_revolutions(2, 2000);

    // Ephemeral ports are not knowable in advance; probe a few fixed ones.
    std::mt19937_64 rng(std::random_device{}());
    for (int attempt = 0; attempt < 4; ++attempt) {
        const int port = 20000 + static_cast<int>(rng() % 20000);
        const auto out_prefix = (dir / ("udp_out_" + std::to_string(attempt))).string();
        const std::string cmd = std::string(PNACC_CLI_PATH) + " decode --in udp:" +
                                std::to_string(port) + " --out " + out_prefix +
                                " --frames 1 --idle-timeout-ms 3000 --cap 800 2>/dev/null";
        FILE* pipe = popen(cmd.c_str(), "r");
        REQUIRE(pipe != nullptr);
        std::this_thread::sleep_for(std::chrono::milliseconds(250));  // let it bind
        replay_capture_records(records, static_cast<std::uint16_t>(port));
        std::string out;
        char buf[4096];
        std::size_t n;
        while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) out.append(buf, n);
        const int rc = pclose(pipe);
        const int exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
        if (exit_code != 0) continue;  // port clash, try another
        CHECK(kv_value(out, "frames") == "1");
        CHECK(kv_value(out, "decoded_points") != "0");
        return;
    }
    FAIL("no usable UDP port found");
}

TEST_CASE("bench: n=1 op count follows the per-layer formula") {
    const auto res = run_cli("bench --net vanilla-cls --n 1 --bits 8");
    REQUIRE(res.exit_code == 0);
    // shared: 3*64 + 64*64 + 64*64 + 64*128 + 128*1024 per point;
    // head: 1024*512 + 512*256 + 256*40
    const std::int64_t macs = 147648 + 665600;
    CHECK(kv_value(res.out, "ops") == std::to_string(2 * macs));
}

TEST_CASE("bench: consistency ratios sit inside the 5% window for published rows") {
    for (const char* net : {"vanilla-cls", "cls", "seg"}) {
        for (int bits : {8, 16}) {
            const auto res = run_cli(std::string("bench --net ") + net + " --bits " +
                                     std::to_string(bits));
            REQUIRE(res.exit_code == 0);
            const std::string ratio_text = kv_value(res.out, "consistency_ratio");
            REQUIRE(!ratio_text.empty());
            const double ratio = std::stod(ratio_text);
            CHECK(ratio >= 0.95);
            CHECK(ratio <= 1.05);
            CHECK(!kv_value(res.out, "reference_fps").empty());
        }
    }
}
