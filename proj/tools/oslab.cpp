// Command-line front end: train, eval, sweep, compare, entropy-curve, make-noise.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oslab/harness.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
    long long seed = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "experiment config (JSON)");
    cmd->add_option("--set", f.overrides, "override a config key, e.g. --set loss.zeta=0.5")->take_all();
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--seed", f.seed, "run seed");
}

oslab::ExperimentConfig resolve(const CommonFlags& f) {
    auto overrides = f.overrides;
    if (f.seed >= 0) overrides.push_back("seed=" + std::to_string(f.seed));
    if (!f.out.empty()) overrides.push_back("out_dir=" + nlohmann::json(f.out).dump());
    return oslab::load_config(f.config, overrides);
}

std::vector<double> parse_values(const std::string& list) {
    std::vector<double> out;
    for (const auto& cell : oslab::detail::split_csv(list)) out.push_back(oslab::detail::parse_double(cell, "--values"));
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"open-set training and evaluation toolkit"};
    app.require_subcommand(1);

    CommonFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "train a model and evaluate it on the open-set protocol");
    add_common(train_cmd, train_flags);

    CommonFlags eval_flags;
    std::string checkpoint;
    auto* eval_cmd = app.add_subcommand("eval", "re-evaluate a stored checkpoint");
    eval_cmd->add_option("--checkpoint", checkpoint, "model.ckpt written by train")->required();
    add_common(eval_cmd, eval_flags);

    CommonFlags sweep_flags;
    std::string parameter = "zeta", values = "0,0.25,0.5,1,2";
    auto* sweep_cmd = app.add_subcommand("sweep", "train once per value of zeta or alpha");
    sweep_cmd->add_option("--param", parameter, "zeta or alpha")->check(CLI::IsMember({"zeta", "alpha"}));
    sweep_cmd->add_option("--values", values, "comma-separated values");
    add_common(sweep_cmd, sweep_flags);

    std::vector<std::string> runs;
    std::string compare_out;
    auto* compare_cmd = app.add_subcommand("compare", "tabulate finished runs (run directories or configs to train)");
    compare_cmd->add_option("runs", runs, "run directories or config files")->required();
    compare_cmd->add_option("--out", compare_out, "directory for comparison.md and comparison.csv");

    std::size_t k = 10, points = 101;
    bool same_class = false;
    std::string entropy_out;
    auto* entropy_cmd = app.add_subcommand("entropy-curve", "target entropy against lambda, linear vs tempered");
    entropy_cmd->add_option("--classes", k, "number of classes K")->check(CLI::Range(2, 1 << 20));
    entropy_cmd->add_option("--points", points, "grid points on [0,1]")->check(CLI::Range(2, 1 << 20));
    entropy_cmd->add_flag("--same-class", same_class, "pair a class with itself");
    entropy_cmd->add_option("--out", entropy_out, "CSV path (stdout when omitted)");

    std::size_t noise_n = 10000;
    double noise_mean = 0.5, noise_std = 1.0;
    std::vector<std::size_t> noise_shape{28, 28};
    long long noise_seed = 0;
    std::string noise_out;
    auto* noise_cmd = app.add_subcommand("make-noise", "write Gaussian-noise unknowns as an IDX image file");
    noise_cmd->add_option("--n", noise_n, "number of images")->check(CLI::PositiveNumber);
    noise_cmd->add_option("--mean", noise_mean, "pixel mean");
    noise_cmd->add_option("--std", noise_std, "pixel standard deviation")->check(CLI::NonNegativeNumber);
    noise_cmd->add_option("--shape", noise_shape, "height width")->expected(2);
    noise_cmd->add_option("--seed", noise_seed, "seed");
    noise_cmd->add_option("--out", noise_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            oslab::train(resolve(train_flags), {&std::cerr, true});
        } else if (*eval_cmd) {
            std::optional<oslab::ExperimentConfig> cfg;
            if (!eval_flags.config.empty() || !eval_flags.overrides.empty()) cfg = resolve(eval_flags);
            const std::string out = eval_flags.out.empty() ? std::filesystem::path(checkpoint).parent_path().string() + "/eval" : eval_flags.out;
            auto r = oslab::evaluate_checkpoint(checkpoint, out, cfg);
            std::cout << nlohmann::json(r).dump(2) << '\n';
        } else if (*sweep_cmd) {
            auto rows = oslab::sweep(resolve(sweep_flags), parameter, parse_values(values), {&std::cerr, true});
            std::cout << parameter << ",accuracy,auosc,auroc\n";
            for (const auto& r : rows)
                std::cout << r.value << ',' << r.report.accuracy << ',' << r.report.auosc << ',' << r.report.auroc << '\n';
        } else if (*compare_cmd) {
            std::vector<std::string> dirs;
            for (const auto& r : runs) {
                if (std::filesystem::is_directory(r)) {
                    dirs.push_back(r);
                } else {
                    auto cfg = oslab::load_config(r);
                    oslab::train(cfg, {&std::cerr, true});
                    dirs.push_back(cfg.out_dir);
                }
            }
            auto table = oslab::compare_runs(dirs);
            std::cout << table.markdown();
            if (!compare_out.empty()) {
                std::filesystem::create_directories(compare_out);
                oslab::detail::open_out(compare_out + "/comparison.md") << table.markdown();
                oslab::detail::open_out(compare_out + "/comparison.csv") << table.csv();
            }
        } else if (*entropy_cmd) {
            auto curve = oslab::target_entropy_curve(k, oslab::linspace(0.0, 1.0, points), same_class);
            std::ostringstream os;
            os << "lambda,h_linear,h_tempered\n";
            for (const auto& p : curve)
                os << oslab::detail::format_double(p.lambda) << ',' << oslab::detail::format_double(p.h_linear) << ','
                   << oslab::detail::format_double(p.h_tempered) << '\n';
            if (entropy_out.empty())
                std::cout << os.str();
            else
                oslab::detail::open_out(entropy_out) << os.str();
        } else if (*noise_cmd) {
            auto split = oslab::make_gaussian_unknowns<double>(noise_n, {1, noise_shape[0], noise_shape[1]}, noise_mean, noise_std,
                                                              static_cast<std::uint64_t>(noise_seed));
            std::vector<std::uint8_t> pixels(split.images.numel());
            for (std::size_t i = 0; i < pixels.size(); ++i)
                pixels[i] = static_cast<std::uint8_t>(std::lround(split.images[i] * 255.0));
            std::filesystem::create_directories(noise_out);
            oslab::write_bytes(noise_out + "/noise-images-idx3-ubyte",
                               oslab::encode_idx_images(pixels, noise_n, noise_shape[0], noise_shape[1]));
        }
    } catch (const std::exception& e) {
        std::cerr << "oslab: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
