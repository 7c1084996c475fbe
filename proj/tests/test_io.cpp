#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "mt3d/io.hpp"
#include "mt3d/rng.hpp"
#include "mt3d/weights.hpp"
#include "test_util.hpp"

using namespace mt3d;

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

TEST_SUITE("io") {

TEST_CASE("bin frames round-trip float32 payloads exactly") {
    testutil::TempDir dir("io-bin");
    Cloud c;
    // values chosen to be exactly representable in float32
    c.points = {{1.5, -2.25, 0.125}, {100.0, 0.0, -0.5}, {0.0, 0.0, 0.0}};
    c.intensity = {0.5, 0.25, 1.0};
    const std::string path = dir.file("frame.bin");
    write_bin_frame(path, c);

    const Cloud back = read_bin_frame(path);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.points[i].x == c.points[i].x);
        CHECK(back.points[i].y == c.points[i].y);
        CHECK(back.points[i].z == c.points[i].z);
        CHECK(back.intensity[i] == c.intensity[i]);
    }

    // write(read(f)) reproduces the file byte for byte
    const std::string again = dir.file("again.bin");
    write_bin_frame(again, back);
    CHECK(read_text_file(again) == read_text_file(path));

    // general doubles survive one write-read cycle up to float32 rounding
    Rng rng(801);
    Cloud noisy;
    for (int i = 0; i < 50; ++i) noisy.points.push_back({rng.normal(), rng.normal(), rng.normal()});
    const std::string np = dir.file("noisy.bin");
    write_bin_frame(np, noisy);
    const Cloud nb = read_bin_frame(np);
    for (int i = 0; i < 50; ++i)
        CHECK(nb.points[i].x == doctest::Approx(noisy.points[i].x).epsilon(1e-6));
    CHECK(nb.intensity == std::vector<double>(50, 0.0));  // missing intensity written as zeros
}

TEST_CASE("bin frame errors carry the path") {
    testutil::TempDir dir("io-binerr");
    const std::string truncated = dir.file("bad.bin");
    write_text_file(truncated, std::string(20, 'x'));  // not a multiple of 16
    CHECK_THROWS_WITH_AS((void)read_bin_frame(truncated),
                         doctest::Contains("bad.bin"), Error);
    CHECK_THROWS_WITH_AS((void)read_bin_frame(dir.file("absent.bin")),
                         doctest::Contains("absent.bin"), Error);
}

TEST_CASE("labels round-trip and report the offending line") {
    testutil::TempDir dir("io-labels");
    std::vector<LabeledFrame> labels;
    labels.push_back({0, Box7(1.0, 2.0, 0.5, 1.8, 4.2, 1.6, 0.3)});
    labels.push_back({1, Box7(1.25, 2.0, 0.5, 1.8, 4.2, 1.6, 0.35)});
    const std::string path = dir.file("labels.jsonl");
    write_labels(path, labels);
    const std::vector<LabeledFrame> back = read_labels(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].frame == 0);
    CHECK(back[1].box.cx == 1.25);
    CHECK(back[1].box.theta == 0.35);

    const std::string bad = dir.file("bad.jsonl");
    write_text_file(bad, "{\"frame\":0,\"cx\":1,\"cy\":2,\"cz\":0,\"w\":1,\"l\":1,\"h\":1,\"theta\":0}\nnot json\n");
    CHECK_THROWS_WITH_AS((void)read_labels(bad), doctest::Contains(":2: bad label line"), Error);
}

TEST_CASE("config json: full round trip and defaults for an empty object") {
    Config cfg;
    cfg.num_tokens = 64;
    cfg.channels = 32;
    cfg.capacity = 5;
    cfg.neighbors = 7;
    cfg.ssm_layers = 2;
    cfg.state_dim = 12;
    cfg.search_scale = 1.5;
    cfg.search_margin = 3.0;
    cfg.precision_cap = 1.0;
    cfg.quality_radius = 0.25;
    cfg.use_gfem = false;
    cfg.use_mask_fusion = false;
    cfg.gfem_scale_logits = false;
    cfg.gfem_raw_history = true;
    cfg.scalar_softmax = true;
    cfg.fps_random_start = true;
    cfg.fps_start_seed = 99;

    const Config back = config_from_json(config_to_json(cfg));
    CHECK(back.num_tokens == cfg.num_tokens);
    CHECK(back.channels == cfg.channels);
    CHECK(back.capacity == cfg.capacity);
    CHECK(back.neighbors == cfg.neighbors);
    CHECK(back.ssm_layers == cfg.ssm_layers);
    CHECK(back.state_dim == cfg.state_dim);
    CHECK(back.search_scale == cfg.search_scale);
    CHECK(back.search_margin == cfg.search_margin);
    CHECK(back.precision_cap == cfg.precision_cap);
    CHECK(back.quality_radius == cfg.quality_radius);
    CHECK(back.use_gfem == cfg.use_gfem);
    CHECK(back.use_mask_fusion == cfg.use_mask_fusion);
    CHECK(back.gfem_scale_logits == cfg.gfem_scale_logits);
    CHECK(back.gfem_raw_history == cfg.gfem_raw_history);
    CHECK(back.scalar_softmax == cfg.scalar_softmax);
    CHECK(back.fps_random_start == cfg.fps_random_start);
    CHECK(back.fps_start_seed == cfg.fps_start_seed);

    const Config defaults = config_from_json(json::object());
    const Config reference;
    CHECK(defaults.num_tokens == reference.num_tokens);
    CHECK(defaults.channels == reference.channels);
    CHECK(defaults.search_margin == reference.search_margin);

    testutil::TempDir dir("io-cfg");
    const std::string path = dir.file("config.json");
    write_config(path, cfg);
    CHECK(read_config(path).neighbors == 7);
}

TEST_CASE("fnv1a64 published constants") {
    // offset basis: hash of the empty string
    CHECK(fnv1a64(nullptr, 0) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(hash_bytes_hex("") == "cbf29ce484222325");

    testutil::TempDir dir("io-hash");
    const std::string path = dir.file("blob.bin");
    const std::string payload = "some bytes\x00with zeros";
    write_text_file(path, payload);
    CHECK(hash_file_hex(path) == hash_bytes_hex(read_text_file(path)));
}

TEST_CASE("weights file: save-load-save is byte identical") {
    testutil::TempDir dir("io-weights");
    Config cfg;
    cfg.num_tokens = 16;
    cfg.channels = 16;
    cfg.ssm_layers = 2;
    cfg.state_dim = 8;
    const PipelineWeights w = init_weights(cfg, 42);

    const std::string p1 = dir.file("w1.mt3d");
    save_weights(p1, cfg, w);
    const LoadedWeights loaded = load_weights(p1);
    CHECK(loaded.config.channels == 16);
    const std::string p2 = dir.file("w2.mt3d");
    save_weights(p2, loaded.config, loaded.weights);
    CHECK(read_text_file(p1) == read_text_file(p2));

    // identical seeds produce identical files, different seeds don't
    const std::string p3 = dir.file("w3.mt3d");
    save_weights(p3, cfg, init_weights(cfg, 42));
    CHECK(hash_file_hex(p3) == hash_file_hex(p1));
    const std::string p4 = dir.file("w4.mt3d");
    save_weights(p4, cfg, init_weights(cfg, 43));
    CHECK(hash_file_hex(p4) != hash_file_hex(p1));
}

TEST_CASE("weights file: corruption is caught by the checksum") {
    testutil::TempDir dir("io-corrupt");
    Config cfg;
    cfg.num_tokens = 8;
    cfg.channels = 8;
    cfg.state_dim = 4;
    const std::string path = dir.file("w.mt3d");
    save_weights(path, cfg, init_weights(cfg, 1));

    std::string bytes = read_text_file(path);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
    const std::string bad = dir.file("bad.mt3d");
    write_text_file(bad, bytes);
    try {
        (void)load_weights(bad);
        FAIL("corrupt file loaded");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ChecksumMismatch);
    }

    const std::string garbage = dir.file("garbage.mt3d");
    write_text_file(garbage, "MTXD nonsense");
    CHECK_THROWS_AS((void)load_weights(garbage), Error);
}

TEST_CASE("tensor map completeness: names, shapes, missing and misshapen tensors") {
    Config cfg;
    cfg.num_tokens = 8;
    cfg.channels = 8;
    cfg.ssm_layers = 2;
    cfg.state_dim = 4;
    const PipelineWeights w = init_weights(cfg, 9);
    const auto tensors = weights_to_tensors(cfg, w);
    const auto specs = required_tensors(cfg);
    CHECK(tensors.size() == specs.size());
    for (const TensorSpec& s : specs) {
        const auto it = tensors.find(s.name);
        REQUIRE(it != tensors.end());
        // vectors are rank-1 specs stored as n x 1 matrices
        CHECK(it->second.rows() == s.shape[0]);
        CHECK(it->second.cols() == (s.shape.size() > 1 ? s.shape[1] : 1));
    }

    auto missing = tensors;
    missing.erase(specs.front().name);
    try {
        (void)weights_from_tensors(cfg, missing);
        FAIL("missing tensor accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MissingTensor);
    }

    auto misshapen = tensors;
    misshapen[specs.front().name] = Mat::Zero(1, 1);
    try {
        (void)weights_from_tensors(cfg, misshapen);
        FAIL("misshapen tensor accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ShapeMismatch);
    }
}

TEST_CASE("seeded initialization invariants") {
    Config cfg;
    cfg.num_tokens = 16;
    cfg.channels = 16;
    cfg.ssm_layers = 3;
    cfg.state_dim = 8;
    const PipelineWeights w = init_weights(cfg, 4);

    CHECK((w.mip.alpha.array() == 1.0).all());
    CHECK((w.mip.beta.array() == 0.0).all());
    for (const BiSSMLayer& layer : w.bissm.layers) {
        CHECK((layer.norm_scale.array() == 1.0).all());
        for (const SelectiveParams* p : {&layer.fwd, &layer.bwd}) {
            CHECK((p->a.array() < 0.0).all());  // stable state matrix
            for (int i = 0; i < p->bdelta.size(); ++i) {
                const double sp = softplus(p->bdelta(i));
                CHECK(sp >= 1e-3);
                CHECK(sp <= 0.1);
            }
        }
    }
    // head weight matrices are seeded like every linear layer; biases are zero
    CHECK(w.head.mask_w.allFinite());
    CHECK(w.head.mask_b == 0.0);
    CHECK(w.head.vote_b.cwiseAbs().maxCoeff() == 0.0);
    CHECK(w.head.box_b.cwiseAbs().maxCoeff() == 0.0);
    CHECK(w.head.bq_b == 0.0);

    // per-tensor seeding: same seed reproduces every tensor bitwise
    const PipelineWeights w2 = init_weights(cfg, 4);
    const auto ta = weights_to_tensors(cfg, w);
    const auto tb = weights_to_tensors(cfg, w2);
    for (const auto& [name, mat] : ta) {
        const auto it = tb.find(name);
        REQUIRE(it != tb.end());
        CHECK((mat - it->second).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("manifest json records inputs, outputs and timing") {
    testutil::TempDir dir("io-manifest");
    RunManifest m;
    m.command = "track --data d1";
    m.config = ojson{{"channels", 128}};
    m.input_hashes = {{"d1/000000.bin", "cbf29ce484222325"}};
    m.outputs = {"results.json"};
    m.seed = 7;
    m.elapsed_seconds = 1.25;
    const std::string path = dir.file("manifest.json");
    write_manifest(path, m);

    const json j = json::parse(read_text_file(path));
    CHECK(j.at("command") == "track --data d1");
    CHECK(j.at("config").at("channels") == 128);
    CHECK(j.at("input_hashes").size() == 1);
    CHECK(j.at("input_hashes").at("d1/000000.bin") == "cbf29ce484222325");
    CHECK(j.at("outputs")[0] == "results.json");
    CHECK(j.at("seed") == 7);
    CHECK(j.at("elapsed_seconds").get<double>() == 1.25);
}

}  // TEST_SUITE
