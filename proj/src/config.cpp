#include "prefflow/config.hpp"

#include <sstream>

#include <fstream>

namespace prefflow {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) fail(line, "malformed number '" + v + "'");
        return d;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        fail(line, "malformed number '" + v + "'");
    }
}

long parse_int(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const long n = std::stol(v, &pos);
        if (pos != v.size()) fail(line, "malformed integer '" + v + "'");
        return n;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        fail(line, "malformed integer '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) fail(line, "malformed unsigned integer '" + v + "'");
        return n;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        fail(line, "malformed unsigned integer '" + v + "'");
    }
}

bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(line, "malformed boolean '" + v + "' (use true/false)");
}

void set_key(RunConfig& cfg, const std::string& section, const std::string& key,
             const std::string& value, int line) {
    auto range_check = [&](bool ok, const std::string& msg) {
        if (!ok) fail(line, key + " " + msg);
    };
    if (section == "run") {
        if (key == "seed") cfg.seed = parse_u64(value, line);
        else if (key == "out_dir") cfg.out_dir = value;
        else fail(line, "unknown key '" + key + "' in [run]");
    } else if (section == "corpus") {
        if (key == "n_levels") {
            cfg.n_levels = static_cast<int>(parse_int(value, line));
            range_check(cfg.n_levels >= 2, "must be >= 2");
        } else if (key == "image_size") {
            const long v = parse_int(value, line);
            range_check(v >= 16, "must be >= 16");
            cfg.image_size = static_cast<std::size_t>(v);
        } else if (key == "holdout") {
            const long v = parse_int(value, line);
            range_check(v >= 0, "must be >= 0");
            cfg.holdout = static_cast<std::size_t>(v);
        } else fail(line, "unknown key '" + key + "' in [corpus]");
    } else if (section == "model") {
        const long v = parse_int(value, line);
        auto positive = [&] { range_check(v >= 1, "must be >= 1"); return static_cast<std::size_t>(v); };
        if (key == "anchor_hidden") cfg.model.anchor_hidden = positive();
        else if (key == "feat_dim") cfg.model.feat_dim = positive();
        else if (key == "embed_dim") cfg.model.embed_dim = positive();
        else if (key == "zlow_dim") cfg.model.zlow_dim = positive();
        else if (key == "encoder_hidden") cfg.model.encoder_hidden = positive();
        else if (key == "gen_hidden") cfg.model.gen_hidden = positive();
        else if (key == "gen_layers") cfg.model.gen_layers = positive();
        else fail(line, "unknown key '" + key + "' in [model]");
    } else if (section == "degradation") {
        if (key == "sigma") {
            cfg.sigma = parse_double(value, line);
            range_check(cfg.sigma >= 0.0 && cfg.sigma <= 15.0, "must be in [0,15]");
        } else if (key == "factor") {
            cfg.factor = static_cast<int>(parse_int(value, line));
            range_check(cfg.factor >= 1 && cfg.factor <= 30, "must be in [1,30]");
        } else if (key == "delta") {
            cfg.delta = parse_double(value, line);
            range_check(cfg.delta >= 0.0 && cfg.delta <= 20.0, "must be in [0,20]");
        } else if (key == "quality") {
            cfg.quality = static_cast<int>(parse_int(value, line));
            range_check(cfg.quality >= 40 && cfg.quality <= 100, "must be in [40,100]");
        } else if (key == "p_rec") {
            cfg.p_rec = parse_double(value, line);
            range_check(cfg.p_rec >= 0.0 && cfg.p_rec <= 1.0, "must be in [0,1]");
        } else fail(line, "unknown key '" + key + "' in [degradation]");
    } else if (section == "stage1") {
        if (key == "alpha") {
            cfg.stage1.alpha = parse_double(value, line);
            range_check(cfg.stage1.alpha >= 0.0, "must be >= 0");
        } else if (key == "beta") {
            cfg.stage1.beta = parse_double(value, line);
            range_check(cfg.stage1.beta >= 0.0, "must be >= 0");
        } else if (key == "lr11") {
            cfg.stage1.lr11 = parse_double(value, line);
            range_check(cfg.stage1.lr11 >= 0.0, "must be >= 0");
        } else if (key == "lr12") {
            cfg.stage1.lr12 = parse_double(value, line);
            range_check(cfg.stage1.lr12 >= 0.0, "must be >= 0");
        } else if (key == "steps11") {
            cfg.stage1.steps11 = static_cast<int>(parse_int(value, line));
            range_check(cfg.stage1.steps11 >= 0, "must be >= 0");
        } else if (key == "steps12") {
            cfg.stage1.steps12 = static_cast<int>(parse_int(value, line));
            range_check(cfg.stage1.steps12 >= 0, "must be >= 0");
        } else if (key == "batch") {
            cfg.stage1.batch = static_cast<int>(parse_int(value, line));
            range_check(cfg.stage1.batch >= 1, "must be >= 1");
        } else if (key == "weight_decay") {
            cfg.stage1.weight_decay = parse_double(value, line);
            range_check(cfg.stage1.weight_decay >= 0.0, "must be >= 0");
        } else if (key == "p_txt") {
            cfg.stage1.p_txt = parse_double(value, line);
            range_check(cfg.stage1.p_txt >= 0.0 && cfg.stage1.p_txt <= 1.0, "must be in [0,1]");
        } else if (key == "p_rec") {
            cfg.stage1.p_rec = parse_double(value, line);
            range_check(cfg.stage1.p_rec >= 0.0 && cfg.stage1.p_rec <= 1.0, "must be in [0,1]");
        } else if (key == "sigma_max") {
            cfg.stage1.sigma_max = parse_double(value, line);
            range_check(cfg.stage1.sigma_max >= 0.5 && cfg.stage1.sigma_max <= 15.0,
                        "must be in [0.5,15]");
        } else if (key == "r_max") {
            cfg.stage1.r_max = static_cast<int>(parse_int(value, line));
            range_check(cfg.stage1.r_max >= 1 && cfg.stage1.r_max <= 30, "must be in [1,30]");
        } else if (key == "delta_max") {
            cfg.stage1.delta_max = parse_double(value, line);
            range_check(cfg.stage1.delta_max >= 0.0 && cfg.stage1.delta_max <= 20.0,
                        "must be in [0,20]");
        } else if (key == "q_min") {
            cfg.stage1.q_min = static_cast<int>(parse_int(value, line));
            range_check(cfg.stage1.q_min >= 40 && cfg.stage1.q_min <= 100, "must be in [40,100]");
        } else fail(line, "unknown key '" + key + "' in [stage1]");
    } else if (section == "nft") {
        if (key == "gamma") {
            cfg.nft.gamma = parse_double(value, line);
            range_check(cfg.nft.gamma > 0.0 && cfg.nft.gamma <= 1.0, "must be in (0,1]");
        } else if (key == "k") {
            cfg.nft.k = static_cast<int>(parse_int(value, line));
            range_check(cfg.nft.k >= 2, "must be >= 2");
        } else if (key == "sampler_steps") {
            cfg.nft.sampler_steps = static_cast<int>(parse_int(value, line));
            range_check(cfg.nft.sampler_steps >= 1, "must be >= 1");
        } else if (key == "z_mode") {
            if (value == "group-std") cfg.nft.z_mode = ZMode::GroupStd;
            else if (value == "fixed") cfg.nft.z_mode = ZMode::FixedConstant;
            else fail(line, "z_mode must be 'group-std' or 'fixed'");
        } else if (key == "z_const") {
            cfg.nft.z_const = parse_double(value, line);
            range_check(cfg.nft.z_const > 0.0, "must be > 0");
        } else if (key == "lr") {
            cfg.nft.lr = parse_double(value, line);
            range_check(cfg.nft.lr >= 0.0, "must be >= 0");
        } else if (key == "rounds") {
            cfg.nft.rounds = static_cast<int>(parse_int(value, line));
            range_check(cfg.nft.rounds >= 0, "must be >= 0");
        } else if (key == "refresh_interval") {
            cfg.nft.refresh_interval = static_cast<int>(parse_int(value, line));
            range_check(cfg.nft.refresh_interval >= 1, "must be >= 1");
        } else if (key == "groups_per_round") {
            cfg.nft.groups_per_round = static_cast<int>(parse_int(value, line));
            range_check(cfg.nft.groups_per_round >= 1, "must be >= 1");
        } else if (key == "weight_decay") {
            cfg.nft.weight_decay = parse_double(value, line);
            range_check(cfg.nft.weight_decay >= 0.0, "must be >= 0");
        } else if (key == "reseed_each_round") {
            cfg.nft.reseed_each_round = parse_bool(value, line);
        } else fail(line, "unknown key '" + key + "' in [nft]");
    } else if (section == "reward") {
        if (key == "w_fidelity") {
            cfg.reward.w_fidelity = parse_double(value, line);
            range_check(cfg.reward.w_fidelity >= 0.0, "must be >= 0");
        } else if (key == "w_sharpness") {
            cfg.reward.w_sharpness = parse_double(value, line);
            range_check(cfg.reward.w_sharpness >= 0.0, "must be >= 0");
        } else if (key == "tau") {
            cfg.reward.tau = parse_double(value, line);
            range_check(cfg.reward.tau > 0.0, "must be > 0");
        } else fail(line, "unknown key '" + key + "' in [reward]");
    } else if (section == "metrics") {
        if (key == "feature_dim") {
            const long v = parse_int(value, line);
            range_check(v >= 1, "must be >= 1");
            cfg.feature_dim = static_cast<std::size_t>(v);
        } else if (key == "variance_runs") {
            cfg.variance_runs = static_cast<int>(parse_int(value, line));
            range_check(cfg.variance_runs >= 2, "must be >= 2");
        } else if (key == "variance_conditions") {
            cfg.variance_conditions = static_cast<int>(parse_int(value, line));
            range_check(cfg.variance_conditions >= 1, "must be >= 1");
        } else fail(line, "unknown key '" + key + "' in [metrics]");
    } else {
        fail(line, "unknown section [" + section + "]");
    }
}

}  // namespace

void RunConfig::validate() const {
    stage1.validate();
    nft.validate();
    reward.validate();
    if (n_levels < 2) throw ConfigError("n_levels must be >= 2");
    if (image_size < 16) throw ConfigError("image_size must be >= 16");
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) fail(line_no, "empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(line_no, "empty key");
        if (section.empty()) fail(line_no, "key '" + key + "' outside any [section]");
        set_key(cfg, section, key, value, line_no);
    }
    cfg.stage1.seed = cfg.seed;
    cfg.nft.seed = cfg.seed;
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "[run]\n";
    out << "seed = " << cfg.seed << "\n";
    out << "out_dir = " << cfg.out_dir << "\n";
    out << "[corpus]\n";
    out << "n_levels = " << cfg.n_levels << "\n";
    out << "image_size = " << cfg.image_size << "\n";
    out << "holdout = " << cfg.holdout << "\n";
    out << "[model]\n";
    out << "anchor_hidden = " << cfg.model.anchor_hidden << "\n";
    out << "feat_dim = " << cfg.model.feat_dim << "\n";
    out << "embed_dim = " << cfg.model.embed_dim << "\n";
    out << "zlow_dim = " << cfg.model.zlow_dim << "\n";
    out << "encoder_hidden = " << cfg.model.encoder_hidden << "\n";
    out << "gen_hidden = " << cfg.model.gen_hidden << "\n";
    out << "gen_layers = " << cfg.model.gen_layers << "\n";
    out << "[degradation]\n";
    out << "sigma = " << cfg.sigma << "\n";
    out << "factor = " << cfg.factor << "\n";
    out << "delta = " << cfg.delta << "\n";
    out << "quality = " << cfg.quality << "\n";
    out << "p_rec = " << cfg.p_rec << "\n";
    out << "[stage1]\n";
    out << "alpha = " << cfg.stage1.alpha << "\n";
    out << "beta = " << cfg.stage1.beta << "\n";
    out << "lr11 = " << cfg.stage1.lr11 << "\n";
    out << "lr12 = " << cfg.stage1.lr12 << "\n";
    out << "steps11 = " << cfg.stage1.steps11 << "\n";
    out << "steps12 = " << cfg.stage1.steps12 << "\n";
    out << "batch = " << cfg.stage1.batch << "\n";
    out << "weight_decay = " << cfg.stage1.weight_decay << "\n";
    out << "p_txt = " << cfg.stage1.p_txt << "\n";
    out << "p_rec = " << cfg.stage1.p_rec << "\n";
    out << "sigma_max = " << cfg.stage1.sigma_max << "\n";
    out << "r_max = " << cfg.stage1.r_max << "\n";
    out << "delta_max = " << cfg.stage1.delta_max << "\n";
    out << "q_min = " << cfg.stage1.q_min << "\n";
    out << "[nft]\n";
    out << "gamma = " << cfg.nft.gamma << "\n";
    out << "k = " << cfg.nft.k << "\n";
    out << "sampler_steps = " << cfg.nft.sampler_steps << "\n";
    out << "z_mode = " << (cfg.nft.z_mode == ZMode::GroupStd ? "group-std" : "fixed") << "\n";
    out << "z_const = " << cfg.nft.z_const << "\n";
    out << "lr = " << cfg.nft.lr << "\n";
    out << "rounds = " << cfg.nft.rounds << "\n";
    out << "refresh_interval = " << cfg.nft.refresh_interval << "\n";
    out << "groups_per_round = " << cfg.nft.groups_per_round << "\n";
    out << "weight_decay = " << cfg.nft.weight_decay << "\n";
    out << "reseed_each_round = " << (cfg.nft.reseed_each_round ? "true" : "false") << "\n";
    out << "[reward]\n";
    out << "w_fidelity = " << cfg.reward.w_fidelity << "\n";
    out << "w_sharpness = " << cfg.reward.w_sharpness << "\n";
    out << "tau = " << cfg.reward.tau << "\n";
    out << "[metrics]\n";
    out << "feature_dim = " << cfg.feature_dim << "\n";
    out << "variance_runs = " << cfg.variance_runs << "\n";
    out << "variance_conditions = " << cfg.variance_conditions << "\n";
    return out.str();
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto dot = assignment.find('.');
    const auto eq = assignment.find('=');
    if (dot == std::string::npos || eq == std::string::npos || dot > eq)
        throw ConfigError("override must be section.key=value: " + assignment);
    const std::string section = trim(assignment.substr(0, dot));
    const std::string key = trim(assignment.substr(dot + 1, eq - dot - 1));
    const std::string value = trim(assignment.substr(eq + 1));
    set_key(cfg, section, key, value, 0);
    cfg.stage1.seed = cfg.seed;
    cfg.nft.seed = cfg.seed;
}

}  // namespace prefflow
