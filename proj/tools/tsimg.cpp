// tsimg: time series <-> image diffusion pipeline CLI.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsimg/eval.hpp"
#include "tsimg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tsimg;

namespace {

struct LoadedCheckpoint {
    RunConfig rc;
    NormalizationState norm;
    std::vector<double> aux;
    int epoch = 0;
    std::unique_ptr<UNet> net;
    nn::AdamW opt;
};

LoadedCheckpoint load_model(const std::string& path) {
    LoadedCheckpoint lc;
    Checkpoint ck = load_checkpoint_raw(path);
    lc.rc = config_from_map(ck.config);
    lc.norm = norm_state_from_map(ck.config);
    lc.aux = aux_from_map(ck.config);
    if (auto it = ck.config.find("train.epoch"); it != ck.config.end())
        lc.epoch = std::stoi(it->second);
    lc.net = std::make_unique<UNet>(lc.rc.denoiser, derive_seed(lc.rc.training.seed, 0xc0de));
    lc.opt = nn::AdamW(lc.net->params(),
                       {lc.rc.training.learning_rate, lc.rc.training.weight_decay});
    restore_from_checkpoint(ck, *lc.net, lc.opt);
    return lc;
}

void save_model(const UNet& net, const nn::AdamW& opt, const RunConfig& rc,
                const NormalizationState& norm, const std::vector<double>& aux, int epoch,
                const std::string& path) {
    ConfigMap m = config_to_map(rc);
    norm_state_to_map(norm, m);
    aux_to_map(aux, m);
    m["train.epoch"] = std::to_string(epoch);
    save_checkpoint(net, opt, m, path);
}

int cmd_transform(const std::string& config_path, const std::string& input_csv,
                  const std::string& out_dir) {
    RunConfig rc = load_run_config(config_path);
    SeriesBatch raw = input_csv.empty() ? load_dataset(rc.dataset, rc.training.seed)
                                        : load_csv(input_csv);
    rc.transform.L = raw.length();
    rc.transform.K = raw.features();
    output_shape(rc.transform);  // validate spec against data shape
    fs::create_directories(out_dir);
    double max_err = 0.0;
    for (size_t i = 0; i < raw.size(); ++i) {
        ImageTensor img = ts2img(raw.items[i], rc.transform);
        write_image_debug(img, out_dir + "/series_" + std::to_string(i) + ".tsim");
        TimeSeries back = img2ts(img, rc.transform);
        for (size_t j = 0; j < back.values.size(); ++j)
            max_err = std::max(max_err, std::abs(back.values[j] - raw.items[i].values[j]));
    }
    std::cout << "transform " << transform_kind_name(rc.transform.kind) << ": wrote "
              << raw.size() << " images, max round-trip error " << max_err << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& resume_path) {
    RunConfig rc;
    NormalizationState norm;
    std::vector<double> aux;
    std::unique_ptr<UNet> net;
    nn::AdamW opt;
    int start_epoch = 0;

    if (!resume_path.empty()) {
        auto lc = load_model(resume_path);
        rc = lc.rc;
        norm = lc.norm;
        aux = lc.aux;
        net = std::move(lc.net);
        opt = std::move(lc.opt);
        start_epoch = lc.epoch;
    } else {
        rc = load_run_config(config_path);
        net = std::make_unique<UNet>(rc.denoiser, derive_seed(rc.training.seed, 0xc0de));
        opt = nn::AdamW(net->params(),
                        {rc.training.learning_rate, rc.training.weight_decay});
    }

    SeriesBatch raw = load_dataset(rc.dataset, derive_seed(rc.training.seed, 0xda7a));
    PreparedData data = prepare_images(raw, rc.dataset.normalization, rc.transform);
    if (resume_path.empty()) {
        norm = data.norm;
        aux = data.aux_default;
    }

    fs::create_directories(out_dir);
    const std::string loss_path = out_dir + "/loss.csv";
    std::ofstream loss_csv(loss_path, start_epoch > 0 ? std::ios::app : std::ios::out);
    if (start_epoch == 0) loss_csv << "epoch,mean_loss\n";
    loss_csv.precision(17);

    save_model(*net, opt, rc, norm, aux, start_epoch, out_dir + "/checkpoint_initial.tsdm");
    train_loop(*net, opt, data.images, rc, start_epoch, rc.training.epochs,
               [&](int e, double loss) {
                   loss_csv << e << "," << loss << "\n";
                   loss_csv.flush();
                   std::cout << "epoch " << e << " mean_loss " << loss << "\n";
                   if (rc.training.checkpoint_interval > 0 &&
                       (e + 1) % rc.training.checkpoint_interval == 0)
                       save_model(*net, opt, rc, norm, aux, e + 1,
                                  out_dir + "/checkpoint_" + std::to_string(e + 1) + ".tsdm");
               });
    save_model(*net, opt, rc, norm, aux, rc.training.epochs, out_dir + "/checkpoint_final.tsdm");
    std::cout << "trained to epoch " << rc.training.epochs << ", final checkpoint in " << out_dir
              << "\n";
    return 0;
}

int cmd_generate(const std::string& ckpt_path, int count, uint64_t seed,
                 const std::string& out_csv) {
    check(count >= 0, "generate: count must be nonnegative");
    auto lc = load_model(ckpt_path);
    SeriesBatch out = generate_series(*lc.net, lc.rc, lc.norm, lc.aux, count, seed);
    write_csv(out, out_csv, lc.rc.dataset.K);
    std::cout << "generated " << count << " series to " << out_csv << "\n";
    return 0;
}

int cmd_inpaint(const std::string& ckpt_path, const std::string& input_csv,
                const std::string& mask_csv, double interpolate_frac, bool extrapolate,
                uint64_t seed, const std::string& out_csv) {
    auto lc = load_model(ckpt_path);
    SeriesBatch raw = load_csv(input_csv);
    const int L = raw.length(), K = raw.features();
    if (L != lc.rc.dataset.L || K != lc.rc.dataset.K)
        throw ValidationError("inpaint: input is " + std::to_string(L) + "x" + std::to_string(K) +
                              ", checkpoint expects " + std::to_string(lc.rc.dataset.L) + "x" +
                              std::to_string(lc.rc.dataset.K));
    const bool have_truth = mask_csv.empty();  // synthesized masks hide known ground truth

    auto [normed, st] = normalize(raw, lc.rc.dataset.normalization);
    const auto sched = build_schedule(lc.rc.diffusion);
    PreconditionedDenoiser model(*lc.net, lc.rc.diffusion.sigma_data);

    SeriesBatch completed;
    std::vector<double> mses;
    for (size_t i = 0; i < raw.size(); ++i) {
        TimeMask mask;
        if (!mask_csv.empty())
            mask = load_mask_csv(mask_csv, L, K);
        else if (extrapolate)
            mask = make_extrapolation_mask(L, K);
        else
            mask = make_interpolation_mask(L, K, interpolate_frac, derive_seed(seed, 0xa5 + i));
        ConditioningContext ctx{normed.items[i], mask, lc.rc.transform};
        TimeSeries filled = inpaint_sample(model, ctx, sched, derive_seed(seed, i));
        if (have_truth) mses.push_back(masked_mse(normed.items[i], filled, mask));
        completed.push(std::move(filled));
    }
    // completed series are in normalized space paired with this input's stats
    write_csv(denormalize(completed, st), out_csv, K);
    if (have_truth) {
        std::ofstream rep(out_csv + ".mse.csv");
        rep << "series_id,masked_mse\n";
        rep.precision(17);
        double mean = 0.0;
        for (size_t i = 0; i < mses.size(); ++i) {
            rep << i << "," << mses[i] << "\n";
            mean += mses[i];
        }
        std::cout << "mean masked MSE " << mean / double(mses.size()) << " over " << mses.size()
                  << " series (report: " << out_csv << ".mse.csv)\n";
    }
    std::cout << "inpainted " << raw.size() << " series to " << out_csv << "\n";
    return 0;
}

int cmd_evaluate(const std::string& real_csv, const std::string& synth_csv,
                 const std::string& config_path, uint64_t seed, const std::string& out_jsonl) {
    RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    SeriesBatch real = load_csv(real_csv), synth = load_csv(synth_csv);

    nlohmann::json cfg_snapshot = {{"hidden_dim", rc.eval.encoder.hidden_dim},
                                   {"epochs", rc.eval.encoder.epochs},
                                   {"learning_rate", rc.eval.encoder.learning_rate},
                                   {"batch_size", rc.eval.encoder.batch_size},
                                   {"k_future", rc.eval.k_future},
                                   {"bins", rc.eval.bins}};
    const std::string config_hash =
        std::to_string(std::hash<std::string>{}(cfg_snapshot.dump()));

    std::ofstream out(out_jsonl);
    if (!out) throw ValidationError("evaluate: cannot write " + out_jsonl);
    for (const auto& name : rc.eval.metrics) {
        std::vector<MetricReport> reps;
        for (int r = 0; r < rc.eval.repeats; ++r) {
            uint64_t s = derive_seed(seed, uint64_t(r));
            if (name == "discriminative")
                reps.push_back(discriminative_score(real, synth, rc.eval.encoder, s));
            else if (name == "predictive")
                reps.push_back(predictive_score(real, synth, rc.eval.encoder, s));
            else if (name == "classification")
                reps.push_back(classification_score(real, synth, rc.eval.encoder, s));
            else if (name == "prediction")
                reps.push_back(prediction_score(real, synth, rc.eval.encoder, rc.eval.k_future, s));
            else if (name == "marginal") {
                auto rep = marginal_score(real, synth, rc.eval.bins);
                rep.seeds = {s};
                reps.push_back(rep);
            }
        }
        MetricReport agg = aggregate_reports(reps);
        nlohmann::json line = {{"metric", agg.metric},   {"value", agg.value},
                               {"std", agg.std_dev},     {"repeats", agg.repeats},
                               {"seed_list", agg.seeds}, {"config_hash", config_hash}};
        out << line.dump() << "\n";
        std::cout << agg.metric << " = " << agg.value << " +/- " << agg.std_dev << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"time series generation via image-space diffusion"};
    app.require_subcommand(1);

    std::string config_path, input_csv, out_path, ckpt_path, resume_path, mask_csv;
    std::string real_csv, synth_csv;
    uint64_t seed = 0;
    int count = 16;
    double interpolate_frac = 0.0;
    bool extrapolate = false;

    auto* t = app.add_subcommand("transform", "convert series to debug images, check round trip");
    t->add_option("--config", config_path)->required();
    t->add_option("--input", input_csv, "input CSV (defaults to the config dataset)");
    t->add_option("--out", out_path)->required();

    auto* tr = app.add_subcommand("train", "train the diffusion denoiser");
    tr->add_option("--config", config_path);
    tr->add_option("--resume", resume_path, "checkpoint to resume from");
    tr->add_option("--out", out_path)->required();

    auto* g = app.add_subcommand("generate", "sample new series from a checkpoint");
    g->add_option("--checkpoint", ckpt_path)->required();
    g->add_option("--count", count);
    g->add_option("--seed", seed);
    g->add_option("--out", out_path)->required();

    auto* ip = app.add_subcommand("inpaint", "masked conditional completion");
    ip->add_option("--checkpoint", ckpt_path)->required();
    ip->add_option("--input", input_csv)->required();
    ip->add_option("--mask", mask_csv, "mask CSV (t,k,observed)");
    ip->add_option("--interpolate", interpolate_frac, "random mask fraction in (0,1)");
    ip->add_flag("--extrapolate", extrapolate, "mask the second half of each series");
    ip->add_option("--seed", seed);
    ip->add_option("--out", out_path)->required();

    auto* ev = app.add_subcommand("evaluate", "compute generation metrics");
    ev->add_option("--real", real_csv)->required();
    ev->add_option("--synth", synth_csv)->required();
    ev->add_option("--config", config_path);
    ev->add_option("--seed", seed);
    ev->add_option("--out", out_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (t->parsed()) return cmd_transform(config_path, input_csv, out_path);
        if (tr->parsed()) {
            if (config_path.empty() && resume_path.empty())
                throw ValidationError("train: need --config or --resume");
            return cmd_train(config_path, out_path, resume_path);
        }
        if (g->parsed()) return cmd_generate(ckpt_path, count, seed, out_path);
        if (ip->parsed()) {
            int modes = int(!mask_csv.empty()) + int(interpolate_frac > 0.0) + int(extrapolate);
            if (modes != 1)
                throw ValidationError(
                    "inpaint: choose exactly one of --mask, --interpolate, --extrapolate");
            return cmd_inpaint(ckpt_path, input_csv, mask_csv, interpolate_frac, extrapolate,
                               seed, out_path);
        }
        if (ev->parsed()) return cmd_evaluate(real_csv, synth_csv, config_path, seed, out_path);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
