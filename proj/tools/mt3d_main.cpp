#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "mt3d/evalbench.hpp"
#include "mt3d/io.hpp"
#include "mt3d/selfcheck.hpp"
#include "mt3d/synthgen.hpp"
#include "mt3d/tracker.hpp"
#include "mt3d/weights.hpp"

namespace fs = std::filesystem;
using namespace mt3d;

namespace {

constexpr const char* kResultsSchema = "mt3d-results-v1";

// exit codes: 0 success, 1 usage, 2 data error, 3 selfcheck failure
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitSelfcheck = 3;

int worker_count() {
    const char* env = std::getenv("MT3D_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n >= 1 ? n : 1;
}

std::string frame_name(int idx) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d.bin", idx);
    return buf;
}

ojson box_to_array(const Box7& b) {
    return ojson::array({b.cx, b.cy, b.cz, b.w, b.l, b.h, b.theta});
}

struct LoadedTracklet {
    Tracklet t;
    std::vector<std::pair<std::string, std::string>> hashes;
};

LoadedTracklet load_tracklet(const fs::path& dir, const std::string& klass_flag) {
    const fs::path labels_path = dir / "labels.jsonl";
    if (!fs::exists(labels_path))
        throw Error(ErrorKind::Io, "missing labels file: " + labels_path.string());

    LoadedTracklet out;
    out.hashes.emplace_back(labels_path.string(), hash_file_hex(labels_path.string()));

    std::vector<LabeledFrame> labels = read_labels(labels_path.string());
    std::sort(labels.begin(), labels.end(),
              [](const LabeledFrame& a, const LabeledFrame& b) { return a.frame < b.frame; });
    if (labels.empty()) throw Error(ErrorKind::EmptyInput, "no labels in " + dir.string());

    for (const LabeledFrame& lf : labels) {
        const fs::path frame_path = dir / frame_name(lf.frame);
        if (!fs::exists(frame_path))
            throw Error(ErrorKind::Io, "missing frame file: " + frame_path.string());
        out.t.frames.push_back(read_bin_frame(frame_path.string()));
        out.t.gt.push_back(lf.box);
        out.hashes.emplace_back(frame_path.string(), hash_file_hex(frame_path.string()));
    }

    out.t.source = dir.filename().string();
    out.t.klass = "Car";
    const fs::path meta = dir / "meta.json";
    if (fs::exists(meta)) {
        const json j = json::parse(read_text_file(meta.string()));
        out.t.klass = j.value("class", out.t.klass);
    }
    if (!klass_flag.empty()) out.t.klass = klass_flag;
    return out;
}

int cmd_synth(const std::string& preset, const std::string& spec_path,
              const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioSpec spec;
    RunManifest manifest;
    manifest.command = "synth";
    if (!spec_path.empty()) {
        spec = scenario_from_json(json::parse(read_text_file(spec_path)));
        manifest.input_hashes.emplace_back(spec_path, hash_file_hex(spec_path));
    } else {
        spec = preset_by_name(preset);
    }

    const Tracklet t = generate(spec);
    fs::create_directories(out_dir);

    std::vector<LabeledFrame> labels;
    for (std::size_t i = 0; i < t.frames.size(); ++i) {
        const fs::path p = fs::path(out_dir) / frame_name(static_cast<int>(i));
        write_bin_frame(p.string(), t.frames[i]);
        manifest.outputs.push_back(p.string());
        labels.push_back({static_cast<int>(i), t.gt[i]});
    }
    const fs::path labels_path = fs::path(out_dir) / "labels.jsonl";
    write_labels(labels_path.string(), labels);
    manifest.outputs.push_back(labels_path.string());

    ojson meta;
    meta["name"] = spec.name;
    meta["class"] = spec.klass;
    meta["seed"] = spec.seed;
    meta["frame_count"] = spec.frame_count;
    meta["scenario"] = scenario_to_json(spec);
    const fs::path meta_path = fs::path(out_dir) / "meta.json";
    write_text_file(meta_path.string(), meta.dump(2) + "\n");
    manifest.outputs.push_back(meta_path.string());

    manifest.config = scenario_to_json(spec);
    manifest.seed = spec.seed;
    manifest.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);

    std::cout << "wrote " << t.frames.size() << " frames to " << out_dir << "\n";
    return 0;
}

ojson results_json(const Tracklet& t, const std::vector<FrameEval>& evals, const Config& cfg,
                   int interval, bool gt_replay, const std::string& weights_hash) {
    ojson j;
    j["schema"] = kResultsSchema;
    j["class"] = t.klass;
    j["source"] = t.source;
    j["interval"] = interval;
    j["gt_replay"] = gt_replay;
    j["weights_hash"] = weights_hash;
    j["config"] = config_to_json(cfg);
    j["frame_count"] = evals.size();
    j["evaluated_frames"] = evals.size() - 1;  // frame 0 is the init frame

    ojson frames = ojson::array();
    std::vector<double> ious, errs;
    for (std::size_t i = 0; i < evals.size(); ++i) {
        const FrameEval& e = evals[i];
        frames.push_back(ojson{{"frame", i},
                               {"pred", box_to_array(e.box)},
                               {"gt", box_to_array(t.gt[i])},
                               {"iou", e.iou},
                               {"center_error", e.center_error},
                               {"coasted", e.coasted}});
        if (i > 0) {
            ious.push_back(e.iou);
            errs.push_back(e.center_error);
        }
    }
    j["frames"] = frames;
    j["success"] = success_auc(ious);
    j["precision"] = precision_auc(errs, cfg.precision_cap);
    return j;
}

int cmd_track(const std::vector<std::string>& data_dirs, const std::string& weights_path,
              int interval, const std::string& out_path, bool gt_replay,
              const std::string& klass, const std::string& config_path) {
    const auto t0 = std::chrono::steady_clock::now();

    Config cfg;
    PipelineWeights weights;
    std::string weights_hash;
    if (!gt_replay) {
        if (weights_path.empty())
            throw Error(ErrorKind::InvalidArgument, "--weights required unless --gt-replay");
        LoadedWeights lw = load_weights(weights_path);
        cfg = lw.config;
        weights = std::move(lw.weights);
        weights_hash = hash_file_hex(weights_path);
    }
    if (!config_path.empty()) cfg = read_config(config_path);

    const bool single = data_dirs.size() == 1 && out_path.size() > 5 &&
                        out_path.compare(out_path.size() - 5, 5, ".json") == 0;
    if (!single) fs::create_directories(out_path);

    struct Job {
        std::string dir;
        std::string out;
    };
    std::vector<Job> jobs;
    for (const std::string& d : data_dirs) {
        std::string out = single
                              ? out_path
                              : (fs::path(out_path) / (fs::path(d).filename().string() + ".json"))
                                    .string();
        jobs.push_back({d, std::move(out)});
    }

    RunManifest manifest;
    manifest.command = "track";
    manifest.config = config_to_json(cfg);
    if (!weights_path.empty())
        manifest.input_hashes.emplace_back(weights_path, hash_file_hex(weights_path));

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors;
    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            try {
                LoadedTracklet lt = load_tracklet(jobs[i].dir, klass);
                const Tracklet sub = subsample_htv(lt.t, interval);
                const std::vector<FrameEval> evals = run_tracklet(sub, cfg, weights, gt_replay);
                const ojson j = results_json(sub, evals, cfg, interval, gt_replay, weights_hash);
                write_text_file(jobs[i].out, j.dump(2) + "\n");
                std::lock_guard<std::mutex> lock(mu);
                for (auto& h : lt.hashes) manifest.input_hashes.push_back(std::move(h));
                manifest.outputs.push_back(jobs[i].out);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                errors.push_back(jobs[i].dir + ": " + e.what());
            }
        }
    };

    const int threads = std::min<int>(worker_count(), static_cast<int>(jobs.size()));
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (!errors.empty()) {
        for (const std::string& e : errors) std::cerr << "error: " << e << "\n";
        return kExitData;
    }

    std::sort(manifest.input_hashes.begin(), manifest.input_hashes.end());
    std::sort(manifest.outputs.begin(), manifest.outputs.end());
    manifest.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string mpath =
        single ? out_path + ".manifest.json"
               : (fs::path(out_path) / "manifest.json").string();
    write_manifest(mpath, manifest);

    for (const Job& jb : jobs) std::cout << "wrote " << jb.out << "\n";
    return 0;
}

std::vector<std::string> expand_results_args(const std::vector<std::string>& args) {
    std::vector<std::string> paths;
    for (const std::string& a : args) {
        const auto star = a.find('*');
        if (star == std::string::npos) {
            paths.push_back(a);
            continue;
        }
        // simple single-star glob: prefix*suffix within one directory
        const fs::path p(a);
        const fs::path dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
        const std::string pat = p.filename().string();
        const auto fstar = pat.find('*');
        const std::string pre = pat.substr(0, fstar);
        const std::string suf = pat.substr(fstar + 1);
        if (!fs::exists(dir)) continue;
        for (const auto& entry : fs::directory_iterator(dir)) {
            const std::string name = entry.path().filename().string();
            if (name.size() >= pre.size() + suf.size() && name.compare(0, pre.size(), pre) == 0 &&
                name.compare(name.size() - suf.size(), suf.size(), suf) == 0)
                paths.push_back(entry.path().string());
        }
    }
    std::sort(paths.begin(), paths.end());
    return paths;
}

int cmd_eval(const std::vector<std::string>& result_args, const std::string& out_path) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::string> paths = expand_results_args(result_args);
    if (paths.empty()) throw Error(ErrorKind::EmptyInput, "no result files matched");

    struct Piece {
        double success, precision;
        std::uint64_t frames;
    };
    std::map<std::string, std::vector<Piece>> by_class;
    for (const std::string& p : paths) {
        json j;
        try {
            j = json::parse(read_text_file(p));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Io, "malformed results file " + p + ": " + e.what());
        }
        if (j.value("schema", std::string()) != kResultsSchema)
            throw Error(ErrorKind::Io, "unrecognized results schema in " + p);
        by_class[j.at("class").get<std::string>()].push_back(
            {j.at("success").get<double>(), j.at("precision").get<double>(),
             j.at("evaluated_frames").get<std::uint64_t>()});
    }

    std::vector<ClassScore> rows;
    for (const auto& [klass, pieces] : by_class) {
        double ws = 0, wp = 0, n = 0;
        for (const Piece& p : pieces) {
            ws += p.success * static_cast<double>(p.frames);
            wp += p.precision * static_cast<double>(p.frames);
            n += static_cast<double>(p.frames);
        }
        rows.push_back({klass, ws / n, wp / n, static_cast<std::uint64_t>(n)});
    }
    const AggregateResult agg = aggregate(rows);

    ojson j;
    j["schema"] = "mt3d-eval-v1";
    ojson table = ojson::array();
    std::printf("%-16s %8s %10s %10s\n", "Class", "Frames", "Success", "Precision");
    for (const ClassScore& r : agg.per_class) {
        std::printf("%-16s %8llu %10.4f %10.4f\n", r.klass.c_str(),
                    static_cast<unsigned long long>(r.frame_count), r.success, r.precision);
        table.push_back(ojson{{"class", r.klass},
                              {"frames", r.frame_count},
                              {"success", r.success},
                              {"precision", r.precision}});
    }
    std::printf("%-16s %8s %10.4f %10.4f\n", "Mean (weighted)", "", agg.mean_success,
                agg.mean_precision);
    j["per_class"] = table;
    j["mean_success"] = agg.mean_success;
    j["mean_precision"] = agg.mean_precision;
    if (!out_path.empty()) {
        write_text_file(out_path, j.dump(2) + "\n");
        RunManifest manifest;
        manifest.command = "eval";
        for (const std::string& p : paths)
            manifest.input_hashes.emplace_back(p, hash_file_hex(p));
        manifest.outputs.push_back(out_path);
        manifest.elapsed_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_manifest(out_path + ".manifest.json", manifest);
    }
    return 0;
}

int cmd_bench(const std::string& sizes_csv, int reps, const std::string& out_csv,
              const std::string& config_path) {
    const auto t0 = std::chrono::steady_clock::now();
    Config cfg;
    if (!config_path.empty()) cfg = read_config(config_path);

    std::vector<int> sizes;
    std::size_t pos = 0;
    while (pos < sizes_csv.size()) {
        const auto comma = sizes_csv.find(',', pos);
        const std::string tok = sizes_csv.substr(pos, comma == std::string::npos
                                                          ? std::string::npos
                                                          : comma - pos);
        if (!tok.empty()) sizes.push_back(std::stoi(tok));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }

    const BenchReport rep = run_bench(cfg, sizes, reps);

    std::string csv = "n,flops_ours,flops_attn,steps_per_sec\n";
    for (const BenchRow& r : rep.rows) {
        char line[160];
        std::snprintf(line, sizeof(line), "%d,%llu,%llu,%.6f\n", r.n,
                      static_cast<unsigned long long>(r.flops_ours),
                      static_cast<unsigned long long>(r.flops_attn), r.steps_per_sec);
        csv += line;
    }
    if (!out_csv.empty()) {
        write_text_file(out_csv, csv);
        RunManifest manifest;
        manifest.command = "bench";
        manifest.config = config_to_json(cfg);
        if (!config_path.empty())
            manifest.input_hashes.emplace_back(config_path, hash_file_hex(config_path));
        manifest.outputs.push_back(out_csv);
        manifest.elapsed_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_manifest(out_csv + ".manifest.json", manifest);
        std::cout << "wrote " << out_csv << "\n";
    } else {
        std::cout << csv;
    }
    std::printf("log-log slope: ours %.3f, attention baseline %.3f\n", rep.slope_ours,
                rep.slope_attn);
    return 0;
}

int cmd_selfcheck(bool inject_fault) {
    const std::vector<CheckResult> results = run_selfcheck(inject_fault);
    for (const CheckResult& r : results)
        std::printf("[%s] %-18s (%.2fs) %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.seconds, r.detail.c_str());
    return all_passed(results) ? 0 : kExitSelfcheck;
}

int cmd_init_weights(const std::string& out_path, std::uint64_t seed,
                     const std::string& config_path) {
    Config cfg;
    if (!config_path.empty()) cfg = read_config(config_path);
    const PipelineWeights w = init_weights(cfg, seed);
    save_weights(out_path, cfg, w);

    RunManifest manifest;
    manifest.command = "init-weights";
    manifest.config = config_to_json(cfg);
    manifest.seed = seed;
    manifest.outputs.push_back(out_path);
    write_manifest(out_path + ".manifest.json", manifest);

    std::cout << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LiDAR single-object tracking toolkit (SSM temporal propagation)"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic tracklet");
    std::string preset = "car-straight", spec_path, synth_out = "out";
    synth->add_option("--preset", preset,
                      "preset name: car-straight, car-turn, ped-sparse, distractor-pair");
    synth->add_option("--spec", spec_path, "scenario spec JSON (overrides --preset)");
    synth->add_option("--out", synth_out, "output directory")->required();

    // track
    auto* track = app.add_subcommand("track", "run the tracker over tracklet directories");
    std::vector<std::string> data_dirs;
    std::string weights_path, track_out = "results.json", track_class, track_config;
    int interval = 1;
    bool gt_replay = false;
    track->add_option("--data", data_dirs, "tracklet directories")->required()->expected(-1);
    track->add_option("--weights", weights_path, "weights file");
    track->add_option("--interval", interval, "HTV sampling interval")->check(CLI::PositiveNumber);
    track->add_option("--out", track_out, "results .json path (single input) or directory");
    track->add_flag("--gt-replay", gt_replay, "oracle mode: emit ground truth as predictions");
    track->add_option("--class", track_class, "class label override for results");
    track->add_option("--config", track_config, "config JSON overriding the weights echo");

    // eval
    auto* eval = app.add_subcommand("eval", "aggregate result files");
    std::vector<std::string> result_args;
    std::string eval_out;
    eval->add_option("results", result_args, "result files (supports simple * globs)")
        ->required()
        ->expected(-1);
    eval->add_option("--out", eval_out, "write the aggregate table as JSON");

    // bench
    auto* bench = app.add_subcommand("bench", "FLOPs and throughput benchmark");
    std::string sizes_csv = "512,1024,2048,4096,8192", bench_out, bench_config;
    int reps = 5;
    bench->add_option("--sizes", sizes_csv, "comma-separated input sizes");
    bench->add_option("--reps", reps, "repetitions per size (median reported)");
    bench->add_option("--out", bench_out, "CSV output path");
    bench->add_option("--config", bench_config, "config JSON");

    // selfcheck
    auto* selfcheck = app.add_subcommand("selfcheck", "run the embedded oracle suite");
    bool inject_fault = false;
    selfcheck->add_flag("--inject-fault", inject_fault,
                        "corrupt one comparison to prove the harness can fail");

    // init-weights
    auto* initw = app.add_subcommand("init-weights", "write seeded initial weights");
    std::string weights_out = "weights.mt3d", init_config;
    std::uint64_t seed = 0;
    initw->add_option("--out", weights_out, "weights file path")->required();
    initw->add_option("--seed", seed, "initialization seed");
    initw->add_option("--config", init_config, "config JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help exits 0; every malformed invocation collapses to the
        // documented usage exit code
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    // conditional requirement CLI11 can't express: a real tracking run needs weights
    if (track->parsed() && !gt_replay && weights_path.empty()) {
        std::cerr << "error: --weights required unless --gt-replay\n";
        return kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(preset, spec_path, synth_out);
        if (track->parsed())
            return cmd_track(data_dirs, weights_path, interval, track_out, gt_replay,
                             track_class, track_config);
        if (eval->parsed()) return cmd_eval(result_args, eval_out);
        if (bench->parsed()) return cmd_bench(sizes_csv, reps, bench_out, bench_config);
        if (selfcheck->parsed()) return cmd_selfcheck(inject_fault);
        if (initw->parsed()) return cmd_init_weights(weights_out, seed, init_config);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
