#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flexlora/federation.hpp"

namespace flexlora {

/// Plain-text key-value config with dotted paths, e.g.
/// `fed.participation_rate = 0.05`. Lines starting with '#' are comments.
class Config {
public:
    static Config from_file(const std::string& path);
    static Config from_text(const std::string& text);

    void set(const std::string& key, const std::string& value);
    /// Applies a `key=value` override string.
    void apply_override(const std::string& kv);

    bool has(const std::string& key) const { return values_.contains(key); }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                            std::vector<std::uint64_t> fallback) const;
    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;

    /// Sorted `key = value` lines; the canonical form hashed into artifacts.
    std::string canonical() const;
    /// FNV-1a over the canonical form, as hex.
    std::string hash_hex() const;

private:
    std::map<std::string, std::string> values_;
};

WorldConfig world_config_from(const Config& cfg);
FedConfig fed_config_from(const Config& cfg, const WorldConfig& world);

Strategy strategy_by_name(const std::string& name);
const char* strategy_name(Strategy s);

}  // namespace flexlora
