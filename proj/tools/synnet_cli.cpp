// synnet: data generation, training, prediction, evaluation and gradient
// checks for SynNet encoder-decoder models.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "synnet/synnet.hpp"

namespace {

using namespace synnet;
using Real = float;

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
    const auto x = s.find('x');
    std::size_t h = 0, w = 0;
    if (x == std::string::npos) throw UsageError("size must look like HxW, got '" + s + "'");
    const std::string a = s.substr(0, x), b = s.substr(x + 1);
    auto [pa, ea] = std::from_chars(a.data(), a.data() + a.size(), h);
    auto [pb, eb] = std::from_chars(b.data(), b.data() + b.size(), w);
    if (a.empty() || b.empty() || ea != std::errc() || eb != std::errc() || pa != a.data() + a.size() ||
        pb != b.data() + b.size()) {
        throw UsageError("size must look like HxW, got '" + s + "'");
    }
    return {h, w};
}

std::vector<std::string> split_paths(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = s.find(',', start);
        out.push_back(s.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

StandardSsimOptions ssim_options_for(const Dataset<Real>& ds) {
    StandardSsimOptions opt;
    if (ds.samples.empty()) return opt;
    const Shape4& s = ds.samples.front().modalities.begin()->second.shape();
    std::size_t k = std::min<std::size_t>(opt.window, std::min(s.h, s.w));
    if (k % 2 == 0) --k;
    opt.window = k;
    return opt;
}

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::size_t> select_split(std::size_t count, double fraction, const std::string& which) {
    const Split sp = split_indices(count, fraction);
    if (which == "train") return sp.train;
    if (which == "test") return sp.test;
    std::vector<std::size_t> all(count);
    for (std::size_t i = 0; i < count; ++i) all[i] = i;
    return all;
}

int cmd_gen_data(const std::string& out, std::size_t count, const std::string& size, std::uint64_t seed) {
    const auto [h, w] = parse_size(size);
    const auto ds = generate_dataset<Real>(count, h, w, seed);
    write_dataset(out, ds);
    std::cout << "wrote " << count << " samples (" << h << "x" << w << ") to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out,
              const std::string& resume, const std::string& history_path) {
    const RunConfig cfg = load_config_file(config_path);
    RestoredRun<Real> run;
    if (resume.empty()) {
        run = fresh_run<Real>(cfg);
    } else {
        run = restore_checkpoint<Real>(load_checkpoint(resume));
        if (!(run.config.topology == cfg.topology)) throw ConfigError("--resume checkpoint topology differs from config");
        if (!run.state) throw LoadError("--resume checkpoint carries no optimizer state");
        run.config = cfg;
    }
    const Dataset<Real> ds = load_dataset<Real>(std::filesystem::path(data));
    const Split split = split_indices(ds.samples.size(), cfg.train.train_fraction);

    std::ofstream hist;
    if (!history_path.empty()) {
        hist.open(history_path);
        if (!hist) throw IoError("cannot open history file " + history_path);
        hist << history_csv_header() << "\n";
    }
    auto on_row = [&](const HistoryRow& r) {
        if (hist.is_open()) hist << history_csv_row(r) << "\n";
    };
    train<Real>(run.model, run.params, *run.state, ds, split.train, cfg.train, on_row);
    save_checkpoint(out, make_checkpoint(cfg, run.params, &*run.state));

    const auto rows = evaluate<Real>(run.model, run.params, ds, split.train, cfg.train.input_modalities,
                                     cfg.train.output_modalities, ssim_options_for(ds));
    const EvalSummary sum = summarize(rows);
    std::cout << "iterations " << run.state->iteration << ", train psnr_db " << fmt(sum.mean_psnr) << ", ssim "
              << fmt(sum.mean_ssim) << "\n";
    return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& input, const std::string& output) {
    const RestoredRun<Real> run = restore_checkpoint<Real>(load_checkpoint(ckpt));
    const auto in_paths = split_paths(input);
    const auto out_paths = split_paths(output);
    const Topology& topo = run.model.topology;
    if (in_paths.size() != topo.in_arms() || out_paths.size() != topo.out_arms()) {
        throw UsageError(to_string(topo.kind) + " checkpoint takes " + std::to_string(topo.in_arms()) +
                         " input and " + std::to_string(topo.out_arms()) + " output files");
    }
    std::vector<Tensor<Real>> inputs;
    for (const auto& p : in_paths) inputs.push_back(load_pgm<Real>(p));
    const auto preds = predict_sample<Real>(run.model, run.params, inputs);
    for (std::size_t h = 0; h < preds.size(); ++h) save_pgm(out_paths[h], preds[h]);
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& report, const std::string& split) {
    const RestoredRun<Real> run = restore_checkpoint<Real>(load_checkpoint(ckpt));
    const Dataset<Real> ds = load_dataset<Real>(std::filesystem::path(data));
    const auto& t = run.config.train;
    const auto idx = select_split(ds.samples.size(), t.train_fraction, split);
    const auto rows =
        evaluate<Real>(run.model, run.params, ds, idx, t.input_modalities, t.output_modalities, ssim_options_for(ds));
    const EvalSummary sum = summarize(rows);
    std::ofstream out(report);
    if (!out) throw IoError("cannot open report " + report);
    out << "sample_id,head,psnr_db,ssim\n";
    for (const auto& r : rows) out << r.sample_id << "," << r.head << "," << fmt(r.psnr_db) << "," << fmt(r.ssim) << "\n";
    out << "mean,," << fmt(sum.mean_psnr) << "," << fmt(sum.mean_ssim) << "\n";
    std::cout << rows.size() << " rows, mean psnr_db " << fmt(sum.mean_psnr) << ", ssim " << fmt(sum.mean_ssim) << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    const GradcheckReport r = gradcheck_suite(seed);
    print_report(std::cout, r);
    return r.all_pass() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SynNet cross-modal image synthesis"};
    app.require_subcommand(1);

    std::string out, data, config, resume, history, ckpt, input, output, report, size = "32x32", split = "test";
    std::size_t count = 10;
    std::uint64_t seed = 42;

    auto* gen = app.add_subcommand("gen-data", "write a synthetic phantom dataset");
    gen->add_option("--out", out, "dataset directory")->required();
    gen->add_option("--count", count, "number of samples");
    gen->add_option("--size", size, "HxW");
    gen->add_option("--seed", seed, "generator seed");

    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--config", config, "config file")->required();
    tr->add_option("--data", data, "dataset directory")->required();
    tr->add_option("--out", out, "checkpoint to write")->required();
    tr->add_option("--resume", resume, "checkpoint to continue from");
    tr->add_option("--history", history, "per-iteration loss CSV");

    auto* pr = app.add_subcommand("predict", "synthesize target images");
    pr->add_option("--ckpt", ckpt, "checkpoint")->required();
    pr->add_option("--input", input, "input PGM file(s), comma separated")->required();
    pr->add_option("--output", output, "output PGM file(s), comma separated")->required();

    auto* ev = app.add_subcommand("eval", "PSNR and SSIM report");
    ev->add_option("--ckpt", ckpt, "checkpoint")->required();
    ev->add_option("--data", data, "dataset directory")->required();
    ev->add_option("--report", report, "report CSV")->required();
    ev->add_option("--split", split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gc->add_option("--seed", seed, "seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "usage: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*gen) return cmd_gen_data(out, count, size, seed);
        if (*tr) return cmd_train(config, data, out, resume, history);
        if (*pr) return cmd_predict(ckpt, input, output);
        if (*ev) return cmd_eval(ckpt, data, report, split);
        if (*gc) return cmd_gradcheck(seed);
    } catch (const synnet::Error& e) {
        std::cerr << e.category() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
