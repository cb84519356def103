// Copyright Contributors to the texsplat project
// SPDX-License-Identifier: Apache-2.0

// texsplat: command-line front end (synth, train, render, eval, inspect).
// Exit codes: 0 success, 1 runtime failure, 2 bad arguments.

#include "texsplat/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

using namespace texsplat;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Bad user input detected after parsing; maps to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SynthArgs {
    std::string name;
    std::string out;
    int views = 8, width = 64, height = 64;
    std::uint64_t seed = 0;
    std::string format = "pfm";
};

struct TrainArgs {
    std::string dataset;
    std::string out = "run";
    std::string init;
    TrainConfig cfg;
    int budget = 0;
    bool no_adapt = false;
    bool quiet = false;
};

struct RenderArgs {
    std::string checkpoint, dataset, camera_json, out;
    int camera = -1;
};

struct EvalArgs {
    std::string checkpoint, dataset;
    std::string split = "test";
};

struct InspectArgs {
    std::string checkpoint;
    bool json_only = false;
};

int threads = 0;

RenderSettings render_settings() {
    RenderSettings s;
    if (threads > 0)
        s.threads = threads;
    return s;
}

int cmd_synth(const SynthArgs &a) {
    if (a.format != "pfm" && a.format != "png")
        throw UsageError("--format must be pfm or png");
    Synthetic s;
    try {
        s = make_synthetic({a.name, a.views, a.width, a.height, a.seed});
    } catch (const std::invalid_argument &e) {
        throw UsageError(e.what());
    }
    save_dataset(a.out, s.dataset, "." + a.format);
    std::cout << json{{"scene", a.name},
                      {"out", a.out},
                      {"views", s.dataset.cameras.size()},
                      {"train", s.dataset.train.size()},
                      {"test", s.dataset.test.size()}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_train(TrainArgs a) {
    TrainConfig &cfg = a.cfg;
    if (a.budget > 0)
        cfg.point_budget = a.budget;
    cfg.adapt = !a.no_adapt;
    cfg.render = render_settings();
    try {
        cfg.validate();
    } catch (const std::invalid_argument &e) {
        throw UsageError(e.what());
    }
    const Dataset ds = load_dataset(a.dataset);
    for (const auto &w : ds.warnings)
        std::cerr << "warning: " << w << "\n";
    std::optional<Scene> init;
    if (!a.init.empty())
        init = load_checkpoint(a.init).scene;

    fs::create_directories(a.out);
    const fs::path log_path = fs::path(a.out) / "metrics.jsonl";
    std::ofstream log(log_path);
    if (!log)
        throw IoError("cannot write " + log_path.string());
    Trainer t(ds, cfg, std::move(init));
    t.run([&](const Metrics &m) {
        const std::string line = m.to_json().dump();
        log << line << "\n" << std::flush;
        if (!a.quiet)
            std::cout << line << "\n" << std::flush;
    });
    const fs::path ckpt = fs::path(a.out) / "checkpoint.sptx";
    save_checkpoint(ckpt, t.checkpoint());
    if (!a.quiet)
        std::cerr << "wrote " << ckpt.string() << " and " << log_path.string() << "\n";
    return 0;
}

int cmd_render(const RenderArgs &a) {
    if (a.camera_json.empty() == a.dataset.empty())
        throw UsageError("give exactly one of --dataset (with --camera) or --camera-json");
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    Camera cam;
    std::optional<Image> reference;
    if (!a.dataset.empty()) {
        const Dataset ds = load_dataset(a.dataset);
        if (a.camera < 0 || std::size_t(a.camera) >= ds.cameras.size())
            throw UsageError("unknown camera id " + std::to_string(a.camera) + " (dataset has " +
                             std::to_string(ds.cameras.size()) + ")");
        cam = ds.cameras[std::size_t(a.camera)];
        reference = ds.images[std::size_t(a.camera)];
    } else {
        std::ifstream in(a.camera_json);
        if (!in)
            throw IoError("cannot open " + a.camera_json);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception &e) {
            throw IoError(a.camera_json + ": " + e.what());
        }
        cam = camera_from_json(j, a.camera_json);
    }
    const Image img = render(cam, ck.scene, render_settings()).image;
    write_image(a.out, img);
    json out{{"out", a.out}, {"width", img.width}, {"height", img.height}};
    if (reference)
        out["psnr"] = psnr(img, *reference);
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_eval(const EvalArgs &a) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Dataset ds = load_dataset(a.dataset);
    const auto &views = a.split == "train" ? ds.train : ds.test;
    if (views.empty())
        throw std::runtime_error("the " + a.split + " split is empty");
    const RenderSettings settings = render_settings();
    json per_view = json::array();
    Real psnr_acc = 0, ssim_acc = 0;
    for (const std::size_t v : views) {
        const Image img = render(ds.cameras[v], ck.scene, settings).image;
        const Real p = psnr(img, ds.images[v]);
        const Real s = ssim(img, ds.images[v]).value;
        psnr_acc += p;
        ssim_acc += s;
        per_view.push_back({{"view", v}, {"psnr", p}, {"ssim", s}});
    }
    const auto pc = parameter_count(ck.scene);
    std::cout << json{{"split", a.split},
                      {"views", views.size()},
                      {"psnr", psnr_acc / Real(views.size())},
                      {"ssim", ssim_acc / Real(views.size())},
                      {"lpips", nullptr},
                      {"note", "LPIPS omitted: it needs a learned network, which this build does not ship"},
                      {"n_prims", pc.n_prims},
                      {"n_texels", pc.n_texels},
                      {"n_params", pc.n_params},
                      {"per_view", per_view}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_inspect(const InspectArgs &a) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Scene &s = ck.scene;
    std::map<int, std::size_t> prims_by_exp, texels_by_exp;
    std::map<int, std::size_t> res_hist; // longer axis, rounded up to a power of two
    std::size_t textured = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const GridLayout &l = s.textures.layout(i);
        const int e = s.prims[i].t2p_exponent;
        ++prims_by_exp[e];
        texels_by_exp[e] += l.texel_count();
        if (l.empty())
            continue;
        ++textured;
        int bucket = 1;
        while (bucket < std::max(l.res_u, l.res_v))
            bucket *= 2;
        ++res_hist[bucket];
    }
    const auto pc = parameter_count(s);
    json hist = json::array(), res = json::array();
    for (const auto &[e, n] : prims_by_exp)
        hist.push_back({{"exponent", e}, {"prims", n}, {"texels", texels_by_exp[e]}});
    for (const auto &[b, n] : res_hist)
        res.push_back({{"max_res_at_most", b}, {"prims", n}});
    const json j{{"iteration", ck.iteration},   {"n_prims", pc.n_prims},         {"n_texels", pc.n_texels},
                 {"n_params", pc.n_params},     {"textured_prims", textured},    {"mean_t2p", mean_t2p_exponent(s)},
                 {"t2p_histogram", hist},       {"resolution_histogram", res}};
    if (!a.json_only) {
        std::cout << "iteration    " << ck.iteration << "\n"
                  << "primitives   " << pc.n_prims << " (" << textured << " textured)\n"
                  << "texels       " << pc.n_texels << "\n"
                  << "parameters   " << pc.n_params << "\n"
                  << "t2p exponent histogram:\n";
        for (const auto &[e, n] : prims_by_exp)
            std::printf("  2^%-3d %6zu prims %10zu texels\n", e, n, texels_by_exp[e]);
        std::cout << "texture size (longer axis):\n";
        for (const auto &[b, n] : res_hist)
            std::printf("  <=%-5d %6zu prims\n", b, n);
    }
    std::cout << j.dump() << "\n";
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"texsplat: textured 2D Gaussian surfels on the CPU"};
    app.require_subcommand(1);
    app.add_option("--threads", threads, "Worker threads (default: TEXSPLAT_THREADS or all cores)")
        ->check(CLI::PositiveNumber);

    SynthArgs sa;
    auto *synth = app.add_subcommand("synth", "Write a synthetic dataset");
    synth->add_option("scene", sa.name, "Scene name")->required()->check(CLI::IsMember(synthetic_names()));
    synth->add_option("--out,-o", sa.out, "Output directory")->required();
    synth->add_option("--views", sa.views, "Number of views")->check(CLI::PositiveNumber);
    synth->add_option("--width", sa.width, "Image width")->check(CLI::PositiveNumber);
    synth->add_option("--height", sa.height, "Image height")->check(CLI::PositiveNumber);
    synth->add_option("--seed", sa.seed, "Seed for procedural textures");
    synth->add_option("--format", sa.format, "Image format: pfm or png")->check(CLI::IsMember({"pfm", "png"}));

    TrainArgs ta;
    TrainConfig &c = ta.cfg;
    auto *tr = app.add_subcommand("train", "Optimize a scene against a dataset");
    tr->add_option("dataset", ta.dataset, "Dataset directory (cameras.json + images/)")->required();
    tr->add_option("--out,-o", ta.out, "Output directory for checkpoint.sptx and metrics.jsonl");
    tr->add_option("--iters", c.iters, "Optimization steps")->capture_default_str();
    tr->add_option("--lambda-ssim", c.weights.ssim, "SSIM weight in the photometric loss")->capture_default_str();
    tr->add_option("--lambda-texture", c.weights.texture, "Texture magnitude weight")->capture_default_str();
    tr->add_option("--lambda-opacity", c.weights.opacity, "Opacity weight")->capture_default_str();
    tr->add_option("--tau-ds", c.adaptation.tau_ds, "Downscale threshold on E_d")->capture_default_str();
    tr->add_option("--tau-tr-start", c.adaptation.tau_tr_start, "Split resolution threshold, initial")
        ->capture_default_str();
    tr->add_option("--tau-tr-end", c.adaptation.tau_tr_end, "Split resolution threshold, final")
        ->capture_default_str();
    tr->add_option("--tau-tr-ramp", c.adaptation.tau_tr_ramp_iters, "Steps over which the threshold ramps")
        ->capture_default_str();
    tr->add_option("--quantile", c.adaptation.quantile, "Error quantile above which primitives adapt")
        ->capture_default_str();
    tr->add_option("--point-budget", ta.budget, "Maximum primitive count; splitting stops there")
        ->check(CLI::PositiveNumber);
    tr->add_option("--seed", c.seed, "Seed for initialization and view order")->capture_default_str();
    tr->add_option("--init-count", c.init_count, "Initial primitive count")->capture_default_str();
    tr->add_option("--init", ta.init, "Start from this checkpoint's scene instead")->check(CLI::ExistingFile);
    tr->add_option("--texture-start", c.texture_start_iter, "Step at which textures are created")
        ->capture_default_str();
    tr->add_option("--adapt-every", c.adapt_every, "Adaptation cadence")->capture_default_str();
    tr->add_option("--adapt-until", c.adapt_until, "Last step that may adapt")->capture_default_str();
    tr->add_option("--prune-opacity", c.prune_opacity, "Prune below this opacity")->capture_default_str();
    tr->add_option("--log-every", c.log_every, "Metrics cadence")->capture_default_str();
    tr->add_flag("--no-adapt", ta.no_adapt, "Disable splitting, texel-size adaptation and pruning");
    tr->add_flag("--quiet,-q", ta.quiet, "Do not echo metrics to stdout");

    RenderArgs ra;
    auto *rd = app.add_subcommand("render", "Render a checkpoint from one camera");
    rd->add_option("checkpoint", ra.checkpoint, "SPTX checkpoint")->required();
    rd->add_option("--dataset", ra.dataset, "Dataset to take the camera (and reference) from");
    rd->add_option("--camera", ra.camera, "Camera index within --dataset");
    rd->add_option("--camera-json", ra.camera_json, "File holding one camera in the cameras.json schema");
    rd->add_option("--out,-o", ra.out, "Output image (.png or .pfm)")->required();

    EvalArgs ea;
    auto *ev = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint on a dataset split");
    ev->add_option("checkpoint", ea.checkpoint, "SPTX checkpoint")->required();
    ev->add_option("dataset", ea.dataset, "Dataset directory")->required();
    ev->add_option("--split", ea.split, "test or train")->check(CLI::IsMember({"test", "train"}));

    InspectArgs ia;
    auto *in = app.add_subcommand("inspect", "Summarize a checkpoint");
    in->add_option("checkpoint", ia.checkpoint, "SPTX checkpoint")->required();
    in->add_flag("--json", ia.json_only, "Print only the JSON summary");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth)
            return cmd_synth(sa);
        if (*tr)
            return cmd_train(ta);
        if (*rd)
            return cmd_render(ra);
        if (*ev)
            return cmd_eval(ea);
        return cmd_inspect(ia);
    } catch (const UsageError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
