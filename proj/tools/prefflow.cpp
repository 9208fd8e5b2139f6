// Command-line surface for the toy restoration stack: corpus generation,
// degradation, two-stage training, NFT fine-tuning, sampling, evaluation,
// variance analysis, and the discrete posterior demo.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "prefflow/config.hpp"
#include "prefflow/degradation.hpp"
#include "prefflow/flow.hpp"
#include "prefflow/metrics.hpp"
#include "prefflow/models.hpp"
#include "prefflow/nft.hpp"
#include "prefflow/posterior.hpp"

namespace fs = std::filesystem;
using namespace prefflow;

namespace {

constexpr const char* kVersion = "0.1.0";

int max_threads() {
    if (const char* env = std::getenv("PREFFLOW_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return static_cast<int>(std::thread::hardware_concurrency());
}

void write_provenance(const RunConfig& cfg, const std::string& subcommand) {
    fs::create_directories(cfg.out_dir);
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["seed"] = cfg.seed;
    j["version"] = kVersion;
    j["threads"] = max_threads();
    j["config"] = serialize_config(cfg);
    std::ofstream out(fs::path(cfg.out_dir) / "run.json");
    if (!out) throw IoError("cannot write run.json under " + cfg.out_dir);
    out << j.dump(2) << "\n";
}

std::string face_path(const RunConfig& cfg, std::size_t index) {
    return (fs::path(cfg.out_dir) / "corpus" / ("face_" + std::to_string(index) + ".pgm")).string();
}

DegradationParams eval_degradation(const RunConfig& cfg, std::size_t index) {
    DegradationParams p;
    p.sigma = cfg.sigma;
    p.factor = snap_factor(cfg.factor, cfg.image_size, cfg.image_size);
    p.delta = cfg.delta;
    p.quality = cfg.quality;
    p.seed = derive_seed(cfg.seed ^ 0xDE64ULL, index);
    return p;
}

Condition make_condition(const Models& models, const RunConfig& cfg, const CorpusItem& item,
                         std::size_t index, bool with_tokens) {
    const Image degraded = degrade(item.hq, eval_degradation(cfg, index));
    return embed_condition(models.anchor, with_tokens ? &item.tokens : nullptr,
                           models.encode(degraded));
}

int cmd_gen_corpus(const RunConfig& cfg) {
    const Corpus corpus = make_corpus(cfg.n_levels, cfg.image_size, cfg.holdout, cfg.seed);
    fs::create_directories(fs::path(cfg.out_dir) / "corpus");
    std::ofstream manifest(fs::path(cfg.out_dir) / "corpus" / "manifest.csv");
    if (!manifest) throw IoError("cannot write corpus manifest");
    manifest << "index,eye_spacing,mouth_curvature,brightness,face_width,path\n";
    for (std::size_t i = 0; i < corpus.items.size(); ++i) {
        const auto& item = corpus.items[i];
        const std::string path = face_path(cfg, i);
        write_pgm(path, item.hq);
        manifest << i;
        for (int level : item.spec.levels) manifest << ',' << level;
        manifest << ',' << path << '\n';
    }
    std::cout << "wrote " << corpus.items.size() << " faces under " << cfg.out_dir << "/corpus\n";
    return 0;
}

int cmd_degrade(const RunConfig& cfg, const std::string& input, const std::string& output) {
    const Image img = read_pgm(input);
    DegradationParams p;
    p.sigma = cfg.sigma;
    p.factor = snap_factor(cfg.factor, img.height, img.width);
    p.delta = cfg.delta;
    p.quality = cfg.quality;
    p.seed = cfg.seed;
    write_pgm(output, degrade(img, p));
    std::cout << "degraded " << input << " -> " << output << "\n";
    return 0;
}

int cmd_train_stage1(const RunConfig& cfg) {
    const Corpus corpus = make_corpus(cfg.n_levels, cfg.image_size, cfg.holdout, cfg.seed);
    ModelConfig mc = cfg.model;
    mc.n_levels = cfg.n_levels;
    mc.image_size = cfg.image_size;
    Models models = Models::create(mc, cfg.seed);
    const Stage1Result result = stage1_train(models, corpus, cfg.stage1);
    fs::create_directories(cfg.out_dir);
    write_stage1_csv((fs::path(cfg.out_dir) / "stage1_metrics.csv").string(), result.log);
    models.save((fs::path(cfg.out_dir) / "stage1.ckpt").string());
    std::cout << "stage1 done; flow loss " << result.initial_flow_loss << " -> "
              << result.final_flow_loss << "\n";
    return 0;
}

int cmd_train_nft(const RunConfig& cfg, const std::string& checkpoint) {
    const Corpus corpus = make_corpus(cfg.n_levels, cfg.image_size, cfg.holdout, cfg.seed);
    ModelConfig mc = cfg.model;
    mc.n_levels = cfg.n_levels;
    mc.image_size = cfg.image_size;
    Models models = Models::create(mc, cfg.seed);
    const std::string ckpt =
        checkpoint.empty() ? (fs::path(cfg.out_dir) / "stage1.ckpt").string() : checkpoint;
    models.load(ckpt);
    const NftResult result = nft_train(models, corpus, cfg.reward, cfg.nft);
    fs::create_directories(cfg.out_dir);
    write_nft_csv((fs::path(cfg.out_dir) / "nft_metrics.csv").string(), result.log);
    models.save((fs::path(cfg.out_dir) / "nft.ckpt").string());
    if (!result.log.empty())
        std::cout << "nft done; mean raw reward " << result.log.front().mean_raw_reward << " -> "
                  << result.log.back().mean_raw_reward << "\n";
    return 0;
}

int cmd_sample(const RunConfig& cfg, const std::string& checkpoint, std::size_t index,
               int steps, std::uint64_t sample_seed, bool null_condition,
               const std::string& output) {
    const Corpus corpus = make_corpus(cfg.n_levels, cfg.image_size, cfg.holdout, cfg.seed);
    if (index >= corpus.items.size()) throw ContractError("sample: corpus index out of range");
    ModelConfig mc = cfg.model;
    mc.n_levels = cfg.n_levels;
    mc.image_size = cfg.image_size;
    Models models = Models::create(mc, cfg.seed);
    models.load(checkpoint);
    const Condition cond =
        make_condition(models, cfg, corpus.items[index], index, !null_condition);
    const Tensor x = euler_sample(models.generator, cond, steps, sample_seed,
                                  cfg.image_size * cfg.image_size);
    write_pgm(output, image_from_tensor(x, cfg.image_size, cfg.image_size));
    std::cout << "wrote sample to " << output << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint) {
    const Corpus corpus = make_corpus(cfg.n_levels, cfg.image_size, cfg.holdout, cfg.seed);
    ModelConfig mc = cfg.model;
    mc.n_levels = cfg.n_levels;
    mc.image_size = cfg.image_size;
    Models models = Models::create(mc, cfg.seed);
    models.load(checkpoint);
    const FeatureMap fm =
        FeatureMap::create(cfg.image_size * cfg.image_size, cfg.feature_dim, cfg.seed ^ 0xFEA7ULL);

    fs::create_directories(cfg.out_dir);
    std::ofstream out(fs::path(cfg.out_dir) / "eval.csv");
    if (!out) throw IoError("cannot write eval.csv");
    out << "index,fidelity,sharpness,total,feat_sim\n";
    out.precision(17);
    std::vector<Tensor> feats_gen, feats_ref;
    double mean_total = 0.0;
    for (std::size_t pos = 0; pos < corpus.holdout_idx.size(); ++pos) {
        const std::size_t idx = corpus.holdout_idx[pos];
        const CorpusItem& item = corpus.items[idx];
        const Condition cond = make_condition(models, cfg, item, idx, true);
        const Tensor x = euler_sample(models.generator, cond, cfg.nft.sampler_steps,
                                      derive_seed(cfg.seed ^ 0xE7A1ULL, idx),
                                      cfg.image_size * cfg.image_size);
        const Tensor gt = Tensor::from_vector(item.hq.pixels.vec());
        const RewardBreakdown b =
            composite_reward(x, gt, cfg.image_size, cfg.image_size, cfg.reward);
        const Image restored = image_from_tensor(x, cfg.image_size, cfg.image_size);
        const double sim = feature_similarity(restored, item.hq, fm);
        out << idx << ',' << b.fidelity << ',' << b.sharpness << ',' << b.total << ',' << sim
            << '\n';
        feats_gen.push_back(fm.project(restored.pixels));
        feats_ref.push_back(fm.project(item.hq.pixels));
        mean_total += b.total;
    }
    const double fid = frechet_distance(feats_gen, feats_ref);
    out << "summary,mean_total," << mean_total / static_cast<double>(corpus.holdout_idx.size())
        << ",frechet," << fid << '\n';
    std::cout << "frechet distance vs ground truth: " << fid << "\n";
    return 0;
}

int cmd_variance(const RunConfig& cfg, const std::string& checkpoint) {
    const Corpus corpus = make_corpus(cfg.n_levels, cfg.image_size, cfg.holdout, cfg.seed);
    ModelConfig mc = cfg.model;
    mc.n_levels = cfg.n_levels;
    mc.image_size = cfg.image_size;
    Models models = Models::create(mc, cfg.seed);
    models.load(checkpoint);

    fs::create_directories(cfg.out_dir);
    std::ofstream out(fs::path(cfg.out_dir) / "variance.csv");
    if (!out) throw IoError("cannot write variance.csv");
    out << "condition_id,std_fidelity,std_sharpness,std_sum\n";
    out.precision(17);
    std::vector<double> fids, sharps, sums;
    const std::size_t n_conditions = std::min<std::size_t>(
        static_cast<std::size_t>(cfg.variance_conditions), corpus.holdout_idx.size());
    for (std::size_t pos = 0; pos < n_conditions; ++pos) {
        const std::size_t idx = corpus.holdout_idx[pos];
        const CorpusItem& item = corpus.items[idx];
        const Condition cond = make_condition(models, cfg, item, idx, true);
        const VarianceReport rep = variance_analysis(
            models.generator, cond, Tensor::from_vector(item.hq.pixels.vec()), cfg.image_size,
            cfg.image_size, cfg.reward, cfg.nft.sampler_steps, cfg.variance_runs,
            derive_seed(cfg.seed ^ 0x7A11ULL, idx));
        out << idx << ',' << rep.std_fidelity << ',' << rep.std_sharpness << ',' << rep.std_sum
            << '\n';
        fids.push_back(rep.std_fidelity);
        sharps.push_back(rep.std_sharpness);
        sums.push_back(rep.std_sum);
    }
    auto median = [](std::vector<double> xs) {
        std::sort(xs.begin(), xs.end());
        const std::size_t n = xs.size();
        return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
    };
    out << "median," << median(fids) << ',' << median(sharps) << ',' << median(sums) << '\n';
    std::cout << "median sum-score std: " << median(sums) << "\n";
    return 0;
}

int cmd_posterior_demo(const std::string& p_csv, const std::string& r_csv, double lambda,
                       std::uint64_t seed) {
    auto parse_list = [](const std::string& csv) {
        std::vector<double> out;
        std::stringstream ss(csv);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
        return out;
    };
    const std::vector<double> p = parse_list(p_csv);
    const std::vector<double> r = parse_list(r_csv);
    const RectifiedPosterior post = rectified_posterior(p, r, lambda);
    std::cout.precision(17);
    std::cout << "x,p,reward,q\n";
    for (std::size_t i = 0; i < p.size(); ++i)
        std::cout << i << ',' << p[i] << ',' << r[i] << ',' << post.q[i] << '\n';
    std::cout << "argmax_q," << post.argmax_q << "\n";
    std::cout << "argmax_logp_plus_lambda_r," << post.argmax_score << "\n";
    Rng rng(seed);
    const DiscreteJoint joint = DiscreteJoint::random(4, 3, 3, rng);
    std::cout << "h_x_given_y," << conditional_entropy(joint, GivenSet::Y) << "\n";
    std::cout << "h_x_given_ys," << conditional_entropy(joint, GivenSet::YS) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy hierarchical restoration stack"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir_flag;
    std::int64_t seed_flag = -1;
    app.add_option("--config", config_path, "config file (key = value with [section] headers)");
    app.add_option("--set", overrides, "override: section.key=value")->take_all();
    app.add_option("--out", out_dir_flag, "output directory (overrides [run] out_dir)");
    app.add_option("--seed", seed_flag, "global seed (overrides [run] seed)");

    std::string input, output = "sample.pgm", checkpoint;
    std::size_t index = 0;
    int steps = 16;
    std::uint64_t sample_seed = 0;
    bool null_condition = false;
    std::string p_csv = "0.5,0.5", r_csv = "0,1";
    double lambda = 1.0;

    auto* gen_corpus = app.add_subcommand("gen-corpus", "render the toy face corpus");
    auto* degrade_cmd = app.add_subcommand("degrade", "apply the LQ synthesis pipeline to a PGM");
    degrade_cmd->add_option("--input", input, "input PGM")->required();
    degrade_cmd->add_option("--output", output, "output PGM")->required();
    auto* train_stage1 = app.add_subcommand("train-stage1", "run the two-step alignment stage");
    auto* train_nft = app.add_subcommand("train-nft", "preference fine-tuning from a stage-1 checkpoint");
    train_nft->add_option("--checkpoint", checkpoint, "stage-1 checkpoint (default <out>/stage1.ckpt)");
    auto* sample_cmd = app.add_subcommand("sample", "restore one corpus face");
    sample_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    sample_cmd->add_option("--index", index, "corpus face index");
    sample_cmd->add_option("--steps", steps, "Euler steps");
    sample_cmd->add_option("--sample-seed", sample_seed, "initial-noise seed");
    sample_cmd->add_flag("--null-condition", null_condition, "use the null semantic condition");
    sample_cmd->add_option("--output", output, "output PGM");
    auto* eval_cmd = app.add_subcommand("eval", "reward and Frechet evaluation on the holdout");
    eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    auto* variance_cmd = app.add_subcommand("variance", "multi-seed determinism analysis");
    variance_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    auto* posterior_cmd = app.add_subcommand("posterior-demo", "rectified posterior on a finite support");
    posterior_cmd->add_option("--p", p_csv, "comma-separated prior");
    posterior_cmd->add_option("--reward", r_csv, "comma-separated rewards");
    posterior_cmd->add_option("--lambda", lambda, "balancing coefficient");

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        for (const auto& o : overrides) apply_override(cfg, o);
        if (!out_dir_flag.empty()) cfg.out_dir = out_dir_flag;
        if (seed_flag >= 0) {
            cfg.seed = static_cast<std::uint64_t>(seed_flag);
            cfg.stage1.seed = cfg.seed;
            cfg.nft.seed = cfg.seed;
        }
        cfg.validate();

        const std::string name = app.get_subcommands().front()->get_name();
        if (name != "posterior-demo") write_provenance(cfg, name);

        if (gen_corpus->parsed()) return cmd_gen_corpus(cfg);
        if (degrade_cmd->parsed()) return cmd_degrade(cfg, input, output);
        if (train_stage1->parsed()) return cmd_train_stage1(cfg);
        if (train_nft->parsed()) return cmd_train_nft(cfg, checkpoint);
        if (sample_cmd->parsed())
            return cmd_sample(cfg, checkpoint, index, steps, sample_seed, null_condition, output);
        if (eval_cmd->parsed()) return cmd_eval(cfg, checkpoint);
        if (variance_cmd->parsed()) return cmd_variance(cfg, checkpoint);
        if (posterior_cmd->parsed()) return cmd_posterior_demo(p_csv, r_csv, lambda, cfg.seed);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const ContractError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
        return 4;
    }
}
