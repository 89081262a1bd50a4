// scunetpp command-line driver: dataset synthesis, training, evaluation,
// inference, gradient checking, ablation runs and parameter reporting.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "scunetpp/data.hpp"
#include "scunetpp/gradcheck.hpp"
#include "scunetpp/metrics.hpp"
#include "scunetpp/model.hpp"
#include "scunetpp/tensor_io.hpp"
#include "scunetpp/trainer.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json parse_override_value(const std::string& raw) {
    json v = json::parse(raw, nullptr, false);
    if (v.is_discarded()) return json(raw);
    return v;
}

// Pulls --section.key=value (and nested --a.b.c=value) arguments out of argv
// and returns them as pointer/value pairs; everything else passes through to
// the regular flag parser.
std::vector<std::string> extract_overrides(std::vector<std::string>& args,
                                           std::vector<std::pair<std::string, json>>& overrides) {
    std::vector<std::string> rest;
    for (const auto& a : args) {
        if (a.rfind("--", 0) == 0) {
            const auto eq = a.find('=');
            const auto dot = a.find('.');
            if (eq != std::string::npos && dot != std::string::npos && dot < eq) {
                std::string path = a.substr(2, eq - 2);
                for (auto& ch : path) {
                    if (ch == '.') ch = '/';
                }
                overrides.emplace_back("/" + path, parse_override_value(a.substr(eq + 1)));
                continue;
            }
        }
        rest.push_back(a);
    }
    return rest;
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream is(path);
    if (!is) throw scunet::UsageError("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw scunet::UsageError("config file " + path + " is not valid JSON: " + e.what());
    }
    return j;
}

void apply_env_seed(json& cfg) {
    const char* env = std::getenv("SCUNETPP_SEED");
    if (!env) return;
    const uint64_t seed = std::strtoull(env, nullptr, 10);
    auto ensure = [&](const json::json_pointer& ptr) {
        if (!cfg.contains(ptr)) cfg[ptr] = seed;
    };
    ensure(json::json_pointer("/model/seed"));
    ensure(json::json_pointer("/train/seed"));
    ensure(json::json_pointer("/data/split_seed"));
    ensure(json::json_pointer("/data/phantom/seed"));
}

scunet::SynthDatasetConfig data_config_from_json(const json& j) {
    scunet::SynthDatasetConfig c;
    auto get = [&](const json& obj, const char* key, auto& field) {
        if (obj.contains(key)) field = obj.at(key).get<std::decay_t<decltype(field)>>();
    };
    get(j, "cases", c.cases);
    get(j, "slices_per_case", c.slices_per_case);
    get(j, "window_center", c.window_center);
    get(j, "window_width", c.window_width);
    get(j, "split_seed", c.split_seed);
    get(j, "threads", c.threads);
    if (j.contains("phantom")) {
        const json& p = j.at("phantom");
        auto& ph = c.phantom;
        get(p, "img_size", ph.img_size);
        get(p, "vessels_min", ph.vessels_min);
        get(p, "vessels_max", ph.vessels_max);
        get(p, "vessel_hu_min", ph.vessel_hu_min);
        get(p, "vessel_hu_max", ph.vessel_hu_max);
        get(p, "vessel_w_min", ph.vessel_w_min);
        get(p, "vessel_w_max", ph.vessel_w_max);
        get(p, "background_hu", ph.background_hu);
        get(p, "emboli_min", ph.emboli_min);
        get(p, "emboli_max", ph.emboli_max);
        get(p, "embolus_hu_min", ph.embolus_hu_min);
        get(p, "embolus_hu_max", ph.embolus_hu_max);
        get(p, "embolus_r_min", ph.embolus_r_min);
        get(p, "embolus_r_max", ph.embolus_r_max);
        get(p, "noise_std", ph.noise_std);
        get(p, "seed", ph.seed);
    }
    return c;
}

json data_config_to_json(const scunet::SynthDatasetConfig& c) {
    json j;
    j["cases"] = c.cases;
    j["slices_per_case"] = c.slices_per_case;
    j["window_center"] = c.window_center;
    j["window_width"] = c.window_width;
    j["split_seed"] = c.split_seed;
    j["threads"] = c.threads;
    json p;
    p["img_size"] = c.phantom.img_size;
    p["vessels_min"] = c.phantom.vessels_min;
    p["vessels_max"] = c.phantom.vessels_max;
    p["vessel_hu_min"] = c.phantom.vessel_hu_min;
    p["vessel_hu_max"] = c.phantom.vessel_hu_max;
    p["vessel_w_min"] = c.phantom.vessel_w_min;
    p["vessel_w_max"] = c.phantom.vessel_w_max;
    p["background_hu"] = c.phantom.background_hu;
    p["emboli_min"] = c.phantom.emboli_min;
    p["emboli_max"] = c.phantom.emboli_max;
    p["embolus_hu_min"] = c.phantom.embolus_hu_min;
    p["embolus_hu_max"] = c.phantom.embolus_hu_max;
    p["embolus_r_min"] = c.phantom.embolus_r_min;
    p["embolus_r_max"] = c.phantom.embolus_r_max;
    p["noise_std"] = c.phantom.noise_std;
    p["seed"] = c.phantom.seed;
    j["phantom"] = p;
    return j;
}

void write_resolved_config(const json& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream os(dir / "config.json");
    os << cfg.dump(2) << "\n";
}

scunet::Hd95Mode parse_hd95_mode(const std::string& s) {
    if (s == "percentile") return scunet::Hd95Mode::Percentile;
    if (s == "paper_scaled") return scunet::Hd95Mode::PaperScaled;
    throw scunet::UsageError("unknown hd95 mode '" + s + "' (percentile | paper_scaled)");
}

void print_report(const scunet::MetricReport& r, std::ostream& os) {
    os << "samples: " << r.samples.size() << "\n";
    os << "DSC:  " << r.dsc_mean << " +/- " << r.dsc_std << "\n";
    if (r.hd_defined_count > 0) {
        os << "HD95: " << r.hd95_mean << " +/- " << r.hd95_std << "  (defined on "
           << r.hd_defined_count << ")\n";
    } else {
        os << "HD95: undefined on every sample\n";
    }
    if (r.hd_undefined > 0) os << "HD-undefined samples: " << r.hd_undefined << "\n";
}

int run(int argc, char** argv) {
    std::vector<std::string> raw_args(argv + 1, argv + argc);
    std::vector<std::pair<std::string, json>> overrides;
    std::vector<std::string> args = extract_overrides(raw_args, overrides);

    CLI::App app{"SCUNet++-style segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, ckpt_path, image_path, split = "test";
    std::string hd95_mode_s = "percentile", level = "full", resume_path, variant_s;
    int cases = -1, slices = -1, epochs_override = -1, threads = 1;
    uint64_t seed = 0;
    bool seed_given = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file (model/train/data sections)");
        sub->add_option("--threads", threads, "worker threads (default 1 for determinism)");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic phantom dataset");
    add_common(synth);
    synth->add_option("--out", out_dir, "dataset directory")->required();
    synth->add_option("--cases", cases, "number of cases");
    synth->add_option("--slices", slices, "slices per case");
    synth->add_option("--seed", seed, "phantom seed")->each([&](const std::string&) { seed_given = true; });

    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    add_common(train_cmd);
    train_cmd->add_option("--data", data_dir, "dataset directory")->required();
    train_cmd->add_option("--out", out_dir, "run directory")->required();
    train_cmd->add_option("--resume", resume_path, "checkpoint to resume from");
    train_cmd->add_option("--epochs", epochs_override, "override epoch count");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd);
    eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
    eval_cmd->add_option("--split", split, "split to evaluate (train|test)");
    eval_cmd->add_option("--hd95-mode", hd95_mode_s, "percentile | paper_scaled");
    eval_cmd->add_option("--out", out_dir, "report directory (default: checkpoint directory)");

    CLI::App* infer = app.add_subcommand("infer", "segment one image");
    add_common(infer);
    infer->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    infer->add_option("--image", image_path, "input image (.img.tsr)")->required();
    infer->add_option("--out", out_dir, "output mask path (.pgm)")->required();

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "run the finite-difference suite");
    gradcheck->add_option("--level", level, "quick | full");

    CLI::App* params = app.add_subcommand("params", "report parameter counts");
    add_common(params);

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "train and compare the ablation variants");
    add_common(ablate_cmd);
    ablate_cmd->add_option("--data", data_dir, "dataset directory")->required();
    ablate_cmd->add_option("--out", out_dir, "output directory")->required();
    ablate_cmd->add_option("--epochs", epochs_override, "epochs per variant (default 10)");

    try {
        std::reverse(args.begin(), args.end());  // CLI11's vector overload pops from the back
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    json cfg = load_config_file(config_path);
    for (const auto& [ptr, value] : overrides) {
        cfg[json::json_pointer(ptr)] = value;
    }
    apply_env_seed(cfg);
    if (!cfg.contains("model")) cfg["model"] = json::object();
    if (!cfg.contains("train")) cfg["train"] = json::object();
    if (!cfg.contains("data")) cfg["data"] = json::object();

    if (synth->parsed()) {
        scunet::SynthDatasetConfig dc = data_config_from_json(cfg["data"]);
        if (cases > 0) dc.cases = cases;
        if (slices > 0) dc.slices_per_case = slices;
        if (seed_given) dc.phantom.seed = seed;
        if (threads > 1) dc.threads = threads;
        scunet::Dataset ds = scunet::synth_dataset(out_dir, dc);
        cfg["data"] = data_config_to_json(dc);
        std::ofstream os(fs::path(out_dir) / "synth_config.json");
        os << cfg["data"].dump(2) << "\n";
        int train_cases = 0, test_cases = 0;
        for (const auto& c : ds.cases) (c.split == "train" ? train_cases : test_cases)++;
        std::cout << "wrote " << ds.cases.size() << " cases (" << train_cases << " train, "
                  << test_cases << " test) under " << out_dir << "\n";
        return 0;
    }

    if (train_cmd->parsed()) {
        scunet::TrainConfig tc = scunet::TrainConfig::from_json(cfg["train"]);
        if (epochs_override > 0) tc.epochs = epochs_override;
        if (threads > 1) tc.threads = threads;
        scunet::Dataset ds = scunet::load_dataset(data_dir);
        scunet::Model model = resume_path.empty()
                                  ? scunet::build_model(scunet::ModelConfig::from_json(cfg["model"]))
                                  : scunet::load_model(resume_path);
        cfg["model"] = model.cfg.to_json();
        cfg["train"] = tc.to_json();
        write_resolved_config(cfg, out_dir);
        const fs::path resume_fs = resume_path;
        scunet::TrainResult res =
            scunet::train(model, tc, ds, out_dir, &std::cout,
                          resume_path.empty() ? nullptr : &resume_fs);
        std::cout << "final train DSC: " << res.final_train_dsc << "\n";
        std::cout << "checkpoints: " << res.last_ckpt.string();
        if (!res.best_ckpt.empty()) std::cout << " best: " << res.best_ckpt.string();
        std::cout << "\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        scunet::Model model = scunet::load_model(ckpt_path);
        scunet::Dataset ds = scunet::load_dataset(data_dir);
        scunet::MetricReport report =
            scunet::evaluate(model, ds, split, parse_hd95_mode(hd95_mode_s), threads);
        const fs::path dir = out_dir.empty() ? fs::path(ckpt_path).parent_path() : fs::path(out_dir);
        fs::create_directories(dir);
        scunet::write_report_csv(report, dir / ("report_" + split + ".csv"));
        scunet::write_report_json(report, dir / ("report_" + split + ".json"));
        print_report(report, std::cout);
        return 0;
    }

    if (infer->parsed()) {
        scunet::Model model = scunet::load_model(ckpt_path);
        scunet::Tensor image = scunet::load_tsr1(image_path);
        if (image.rank() != 2) {
            throw scunet::UsageError("infer: image must be a rank-2 TSR1 tensor");
        }
        scunet::Tensor batch = scunet::batch_input({scunet::to_model_input(image)});
        scunet::NoGradGuard ng;
        scunet::ModelOutput out = scunet::forward(model, batch, scunet::Mode::Eval);
        const int64_t K = out.logits.shape()[1], H = out.logits.shape()[2],
                      W = out.logits.shape()[3];
        scunet::Tensor one = scunet::Tensor::from_data(
            {K, H, W}, std::vector<double>(out.logits.data().begin(), out.logits.data().end()));
        scunet::write_pgm(scunet::mask_from_logits(one), out_dir);
        std::cout << "wrote " << out_dir << "\n";
        return 0;
    }

    if (gradcheck->parsed()) {
        const bool full = level == "full";
        if (!full && level != "quick") throw scunet::UsageError("gradcheck: level must be quick|full");
        const int seeds = full ? 20 : 3;
        auto results = scunet::gradcheck_ops(seeds);
        results.push_back(scunet::gradcheck_micro_model(full ? 20 : 2));
        scunet::print_results(results, std::cout);
        return scunet::all_pass(results) ? 0 : 2;
    }

    if (params->parsed()) {
        const scunet::ModelConfig base = scunet::ModelConfig::from_json(cfg["model"]);
        for (const auto v : {scunet::AblationVariant::Full, scunet::AblationVariant::NoDenseSkip,
                             scunet::AblationVariant::NoCnnBottleneck}) {
            scunet::Model m = scunet::build_model(scunet::ablate(base, v));
            std::cout << scunet::variant_name(v) << ": " << scunet::param_count(m) << " parameters\n";
        }
        return 0;
    }

    if (ablate_cmd->parsed()) {
        scunet::TrainConfig tc = scunet::TrainConfig::from_json(cfg["train"]);
        tc.epochs = epochs_override > 0 ? epochs_override : 10;
        tc.early_stop_train_dsc = 0.0;
        if (threads > 1) tc.threads = threads;
        const scunet::ModelConfig base = scunet::ModelConfig::from_json(cfg["model"]);
        scunet::Dataset ds = scunet::load_dataset(data_dir);
        fs::create_directories(out_dir);
        cfg["train"] = tc.to_json();
        write_resolved_config(cfg, out_dir);

        json table = json::array();
        std::ofstream csv(fs::path(out_dir) / "ablation.csv");
        csv << "variant,params,dsc_mean,dsc_std,hd95_mean,hd95_std\n";
        std::cout << "variant            params      DSC            HD95\n";
        for (const auto v : {scunet::AblationVariant::Full, scunet::AblationVariant::NoDenseSkip,
                             scunet::AblationVariant::NoCnnBottleneck}) {
            const std::string name = scunet::variant_name(v);
            scunet::Model model = scunet::build_model(scunet::ablate(base, v));
            const fs::path run_dir = fs::path(out_dir) / name;
            scunet::train(model, tc, ds, run_dir, nullptr);
            scunet::MetricReport rep = scunet::evaluate(model, ds, "test", tc.hd95_mode, threads);
            const int64_t np = scunet::param_count(model);
            json row;
            row["variant"] = name;
            row["params"] = np;
            row["dsc_mean"] = rep.dsc_mean;
            row["dsc_std"] = rep.dsc_std;
            if (rep.hd_defined_count > 0) {
                row["hd95_mean"] = rep.hd95_mean;
                row["hd95_std"] = rep.hd95_std;
                csv << name << "," << np << "," << rep.dsc_mean << "," << rep.dsc_std << ","
                    << rep.hd95_mean << "," << rep.hd95_std << "\n";
            } else {
                row["hd95_mean"] = nullptr;
                row["hd95_std"] = nullptr;
                csv << name << "," << np << "," << rep.dsc_mean << "," << rep.dsc_std << ",nan,nan\n";
            }
            table.push_back(row);
            char line[160];
            std::snprintf(line, sizeof(line), "%-18s %-10lld %.4f +/- %.4f", name.c_str(),
                          static_cast<long long>(np), rep.dsc_mean, rep.dsc_std);
            std::cout << line;
            if (rep.hd_defined_count > 0) {
                std::snprintf(line, sizeof(line), "  %.4f +/- %.4f", rep.hd95_mean, rep.hd95_std);
                std::cout << line;
            } else {
                std::cout << "  undefined";
            }
            std::cout << "\n";
        }
        std::ofstream js(fs::path(out_dir) / "ablation.json");
        js << table.dump(2) << "\n";
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const scunet::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
