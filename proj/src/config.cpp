#include "flexlora/config.hpp"

#include <fstream>
#include <sstream>

namespace flexlora {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        parts.push_back(trim(item));
    }
    return parts;
}

}  // namespace

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidConfig("cannot read config file: " + path);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

Config Config::from_text(const std::string& text) {
    Config cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw InvalidConfig("config line " + std::to_string(lineno) + ": expected key = value");
        }
        cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
    if (key.empty()) {
        throw InvalidConfig("config: empty key");
    }
    values_[key] = value;
}

void Config::apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
        throw InvalidConfig("override must be key=value: " + kv);
    }
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw InvalidConfig("config: " + key + " is not a number: " + it->second);
    }
}

int Config::get_int(const std::string& key, int fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const int v = std::stoi(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw InvalidConfig("config: " + key + " is not an integer: " + it->second);
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw InvalidConfig("config: " + key + " is not a boolean: " + it->second);
}

std::vector<std::uint64_t> Config::get_u64_list(const std::string& key,
                                                std::vector<std::uint64_t> fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::uint64_t> out;
    for (const std::string& part : split(it->second, ',')) {
        if (part.empty()) continue;
        out.push_back(std::stoull(part));
    }
    if (out.empty()) {
        throw InvalidConfig("config: " + key + " must be a non-empty list");
    }
    return out;
}

std::vector<int> Config::get_int_list(const std::string& key, std::vector<int> fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    for (const std::string& part : split(it->second, ',')) {
        if (part.empty()) continue;
        out.push_back(std::stoi(part));
    }
    if (out.empty()) {
        throw InvalidConfig("config: " + key + " must be a non-empty list");
    }
    return out;
}

std::string Config::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

std::string Config::hash_hex() const {
    // FNV-1a 64-bit
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Strategy strategy_by_name(const std::string& name) {
    if (name == "naive") return Strategy::Naive;
    if (name == "flexlora") return Strategy::FlexLora;
    if (name == "hetlora") return Strategy::HetLora;
    throw InvalidConfig("unknown strategy: " + name);
}

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Naive: return "naive";
        case Strategy::FlexLora: return "flexlora";
        case Strategy::HetLora: return "hetlora";
    }
    return "?";
}

WorldConfig world_config_from(const Config& cfg) {
    WorldConfig w;
    w.num_clients = cfg.get_int("world.num_clients", w.num_clients);
    w.num_task_archetypes = cfg.get_int("world.num_archetypes", w.num_task_archetypes);
    w.shared_rank = cfg.get_int("world.shared_rank", w.shared_rank);
    w.archetype_rank = cfg.get_int("world.archetype_rank", w.archetype_rank);
    w.shared_scale = cfg.get_double("world.shared_scale", w.shared_scale);
    w.archetype_scale = cfg.get_double("world.archetype_scale", w.archetype_scale);
    w.noise_sigma = cfg.get_double("world.noise_sigma", w.noise_sigma);
    w.samples_min = cfg.get_int("world.samples_min", w.samples_min);
    w.samples_max = cfg.get_int("world.samples_max", w.samples_max);
    w.dirichlet_alpha = cfg.get_double("world.dirichlet_alpha", w.dirichlet_alpha);
    const std::string mode = cfg.get_str("world.mode", "meta");
    if (mode == "meta") {
        w.mode = AssignmentMode::Meta;
    } else if (mode == "mixture") {
        w.mode = AssignmentMode::Mixture;
    } else {
        throw InvalidConfig("world.mode must be meta or mixture");
    }
    w.input_dim = cfg.get_int("world.input_dim", w.input_dim);
    w.hidden_dim = cfg.get_int("world.hidden_dim", w.hidden_dim);
    w.output_dim = cfg.get_int("world.output_dim", w.output_dim);
    w.seed = static_cast<std::uint64_t>(cfg.get_int("world.seed", 1));
    return w;
}

FedConfig fed_config_from(const Config& cfg, const WorldConfig& world) {
    FedConfig f;
    f.strategy = strategy_by_name(cfg.get_str("fed.strategy", "flexlora"));
    const std::string dist = cfg.get_str("fed.distribution", "uniform");
    if (dist.find(',') != std::string::npos) {
        const auto parts = split(dist, ',');
        if (parts.size() != 4) {
            throw InvalidDistribution("fed.distribution: custom mixture needs 4 weights");
        }
        for (int i = 0; i < 4; ++i) f.distribution.weights[i] = std::stod(parts[i]);
        f.distribution.validate();
    } else {
        f.distribution = ResourceDistribution::by_name(dist);
    }
    for (int t = 0; t < 4; ++t) {
        const std::string key = "fed.palette.type" + std::to_string(t + 1);
        f.palette.ranks[t] = cfg.get_int_list(key, f.palette.ranks[t]);
        if (f.palette.ranks[t].size() != world.layer_shapes().size()) {
            throw InvalidConfig(key + ": one rank per layer required");
        }
    }
    f.participation_rate = cfg.get_double("fed.participation_rate", f.participation_rate);
    f.fixed_participants = cfg.get_int("fed.fixed_participants", f.fixed_participants);
    f.max_rounds = cfg.get_int("fed.max_rounds", f.max_rounds);
    f.early_stop_patience = cfg.get_int("fed.patience", f.early_stop_patience);
    f.scaling = cfg.get_double("fed.scaling", f.scaling);
    f.hetlora_decay = cfg.get_double("fed.hetlora_decay", f.hetlora_decay);
    f.loss_threshold = cfg.get_double("fed.loss_threshold", f.loss_threshold);
    f.zeroshot_pool = cfg.get_int("fed.zeroshot_pool", f.zeroshot_pool);
    f.budgeted_deploy = cfg.get_bool("fed.budgeted_deploy", f.budgeted_deploy);
    f.population = cfg.get_int("fed.population", f.population);

    const std::string kind = cfg.get_str("opt.kind", "sgd");
    if (kind == "sgd") {
        f.opt.kind = OptimizerKind::Sgd;
    } else if (kind == "adam") {
        f.opt.kind = OptimizerKind::Adam;
    } else {
        throw InvalidConfig("opt.kind must be sgd or adam");
    }
    f.opt.learning_rate = cfg.get_double("opt.lr", f.opt.learning_rate);
    f.opt.epochs = cfg.get_int("opt.epochs", f.opt.epochs);
    f.opt.batch_size = cfg.get_int("opt.batch_size", f.opt.batch_size);
    f.opt.l2_adapter_penalty = cfg.get_double("opt.l2_adapter_penalty", f.opt.l2_adapter_penalty);
    f.opt.lr_linear_decay = cfg.get_bool("opt.lr_linear_decay", f.opt.lr_linear_decay);
    f.seed = world.seed;
    return f;
}

}  // namespace flexlora
