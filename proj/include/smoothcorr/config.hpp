#pragma once

#include "smoothcorr/losses.hpp"

#include <cstdlib>
#include <map>

namespace smoothcorr {

// Minimal TOML-style config: flat `key = value` lines, # comments, values
// are strings ("..."), numbers, booleans, or homogeneous arrays of numbers
// or strings. No sections.
namespace toml {

struct Value {
    enum class Kind { string, number, boolean, number_array, string_array };
    Kind kind = Kind::number;
    std::string str;
    double num = 0.0;
    bool boolean = false;
    std::vector<double> nums;
    std::vector<std::string> strs;
    int line = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline bool parse_number(const std::string& token, double& out) {
    if (token.empty()) return false;
    char* end = nullptr;
    out = std::strtod(token.c_str(), &end);
    return end == token.c_str() + token.size();
}

inline Value parse_scalar(const std::string& token, const std::string& where, int line) {
    Value v;
    v.line = line;
    if (token.size() >= 2 && token.front() == '"' && token.back() == '"') {
        v.kind = Value::Kind::string;
        v.str = token.substr(1, token.size() - 2);
        check(v.str.find('"') == std::string::npos, "parse",
              where + ":" + std::to_string(line) + ": nested quote in string");
        return v;
    }
    if (token == "true" || token == "false") {
        v.kind = Value::Kind::boolean;
        v.boolean = token == "true";
        return v;
    }
    check(parse_number(token, v.num), "parse",
          where + ":" + std::to_string(line) + ": cannot parse value '" + token + "'");
    v.kind = Value::Kind::number;
    return v;
}

// Strip a trailing comment, respecting quoted strings.
inline std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

}  // namespace detail

inline std::map<std::string, Value> parse_file(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "io", "cannot open config: " + path);
    std::map<std::string, Value> out;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = detail::trim(detail::strip_comment(raw));
        if (line.empty()) continue;
        check(line[0] != '[', "parse",
              path + ":" + std::to_string(line_no) + ": sections are not supported");
        const auto eq = line.find('=');
        check(eq != std::string::npos, "parse",
              path + ":" + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        check(!key.empty() && !value.empty(), "parse",
              path + ":" + std::to_string(line_no) + ": empty key or value");
        check(out.find(key) == out.end(), "parse",
              path + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");

        if (value.front() == '[') {
            check(value.back() == ']', "parse",
                  path + ":" + std::to_string(line_no) + ": unterminated array");
            Value v;
            v.line = line_no;
            const std::string body = value.substr(1, value.size() - 2);
            std::vector<std::string> tokens;
            std::string current;
            bool quoted = false;
            for (char c : body) {
                if (c == '"') quoted = !quoted;
                if (c == ',' && !quoted) {
                    tokens.push_back(detail::trim(current));
                    current.clear();
                } else {
                    current += c;
                }
            }
            if (!detail::trim(current).empty()) tokens.push_back(detail::trim(current));
            bool all_strings = true, all_numbers = true;
            for (const auto& t : tokens) {
                const Value s = detail::parse_scalar(t, path, line_no);
                if (s.kind == Value::Kind::string) {
                    v.strs.push_back(s.str);
                    all_numbers = false;
                } else if (s.kind == Value::Kind::number) {
                    v.nums.push_back(s.num);
                    all_strings = false;
                } else {
                    fail("parse", path + ":" + std::to_string(line_no) +
                                      ": arrays may hold numbers or strings only");
                }
            }
            check(all_strings || all_numbers, "parse",
                  path + ":" + std::to_string(line_no) + ": mixed array element types");
            v.kind = v.strs.empty() && !v.nums.empty() ? Value::Kind::number_array
                                                       : Value::Kind::string_array;
            if (tokens.empty()) v.kind = Value::Kind::number_array;
            out.emplace(key, std::move(v));
        } else {
            out.emplace(key, detail::parse_scalar(value, path, line_no));
        }
    }
    return out;
}

}  // namespace toml

// ---------------------------------------------------------------------------

struct RunConfig {
    std::uint64_t seed = 1;

    LossConfig loss;  // tau 0.07, lambda, regularizer, sample_count 1024, k 30

    int in_dim = 3;
    std::vector<int> hidden_dims = {128, 128, 128, 128};
    int out_dim = 128;

    double learning_rate = 0.001;
    int epochs = 200;
    int batch_size = 1;

    std::string manifest = "data/manifest.json";
    std::string cache_dir = "cache";
    std::string out_dir = "out";

    std::vector<std::string> templates = {"icosphere:2", "cylinder:6x16"};
    int n_train = 20;
    int n_test = 10;
    double magnitude = 0.05;
    double decimate_fraction = 1.0;

    int kp2d_min_nodes = 5;
    int kp2d_max_nodes = 19;
    int kp2d_embed_dim = 8;
    double kp2d_signal_noise = 0.01;
    double kp2d_position_noise = 1.0;
    std::string kp2d_data_dir = "kp2d-data";

    void validate() const {
        loss.validate();
        check(in_dim >= 1 && out_dim >= 1, "invariant", "config: model dims must be >= 1");
        check(!hidden_dims.empty(), "invariant", "config: hidden_dims must be nonempty");
        for (int w : hidden_dims)
            check(w >= 1, "invariant", "config: hidden widths must be >= 1");
        check(learning_rate > 0.0, "invariant", "config: learning_rate must be positive");
        check(epochs >= 1, "invariant", "config: epochs must be >= 1");
        check(batch_size == 1, "invariant", "config: only batch_size = 1 is supported");
        check(n_train >= 0 && n_test >= 0, "invariant", "config: pair counts must be >= 0");
        check(magnitude >= 0.0, "invariant", "config: magnitude must be >= 0");
        check(decimate_fraction > 0.0 && decimate_fraction <= 1.0, "invariant",
              "config: decimate_fraction must lie in (0, 1]");
        check(kp2d_min_nodes >= 1 && kp2d_max_nodes >= kp2d_min_nodes, "invariant",
              "config: bad kp2d node range");
        check(kp2d_embed_dim >= 1, "invariant", "config: kp2d_embed_dim must be >= 1");
        check(kp2d_signal_noise >= 0.0 && kp2d_position_noise >= 0.0, "invariant",
              "config: kp2d noise levels must be >= 0");
    }
};

namespace detail {

inline double want_number(const toml::Value& v, const std::string& key) {
    check(v.kind == toml::Value::Kind::number, "parse", "config key '" + key + "' must be a number");
    return v.num;
}

inline int want_int(const toml::Value& v, const std::string& key) {
    const double num = want_number(v, key);
    const double rounded = std::nearbyint(num);
    check(std::abs(num - rounded) < 1e-9 && std::abs(num) < 2e9, "parse",
          "config key '" + key + "' must be an integer");
    return static_cast<int>(rounded);
}

inline std::string want_string(const toml::Value& v, const std::string& key) {
    check(v.kind == toml::Value::Kind::string, "parse",
          "config key '" + key + "' must be a quoted string");
    return v.str;
}

inline std::vector<int> want_int_array(const toml::Value& v, const std::string& key) {
    check(v.kind == toml::Value::Kind::number_array, "parse",
          "config key '" + key + "' must be an array of numbers");
    std::vector<int> out;
    for (double num : v.nums) {
        const double rounded = std::nearbyint(num);
        check(std::abs(num - rounded) < 1e-9, "parse",
              "config key '" + key + "' must hold integers");
        out.push_back(static_cast<int>(rounded));
    }
    return out;
}

inline std::vector<std::string> want_string_array(const toml::Value& v, const std::string& key) {
    check(v.kind == toml::Value::Kind::string_array, "parse",
          "config key '" + key + "' must be an array of strings");
    return v.strs;
}

}  // namespace detail

inline void apply_cache_env(RunConfig& cfg) {
    if (const char* env = std::getenv("SMOOTHCORR_CACHE"); env != nullptr && env[0] != '\0')
        cfg.cache_dir = env;
}

inline RunConfig load_config(const std::string& path) {
    RunConfig cfg;
    const auto values = toml::parse_file(path);
    for (const auto& [key, v] : values) {
        using detail::want_int;
        using detail::want_int_array;
        using detail::want_number;
        using detail::want_string;
        using detail::want_string_array;
        if (key == "seed") {
            const double num = want_number(v, key);
            check(num >= 0.0, "parse", "config: seed must be nonnegative");
            cfg.seed = static_cast<std::uint64_t>(num);
        } else if (key == "tau") {
            cfg.loss.tau = want_number(v, key);
        } else if (key == "lambda") {
            cfg.loss.lambda = want_number(v, key);
        } else if (key == "lambda2") {
            cfg.loss.lambda2 = want_number(v, key);
        } else if (key == "regularizer") {
            cfg.loss.regularizer = parse_regularizer(want_string(v, key));
        } else if (key == "regularizer2") {
            cfg.loss.regularizer2 = parse_regularizer(want_string(v, key));
        } else if (key == "sample_count") {
            cfg.loss.sample_count = want_int(v, key);
        } else if (key == "k") {
            cfg.loss.k = want_int(v, key);
        } else if (key == "in_dim") {
            cfg.in_dim = want_int(v, key);
        } else if (key == "hidden_dims") {
            cfg.hidden_dims = want_int_array(v, key);
        } else if (key == "out_dim") {
            cfg.out_dim = want_int(v, key);
        } else if (key == "learning_rate") {
            cfg.learning_rate = want_number(v, key);
        } else if (key == "epochs") {
            cfg.epochs = want_int(v, key);
        } else if (key == "batch_size") {
            cfg.batch_size = want_int(v, key);
        } else if (key == "manifest") {
            cfg.manifest = want_string(v, key);
        } else if (key == "cache_dir") {
            cfg.cache_dir = want_string(v, key);
        } else if (key == "out_dir") {
            cfg.out_dir = want_string(v, key);
        } else if (key == "templates") {
            cfg.templates = want_string_array(v, key);
        } else if (key == "n_train") {
            cfg.n_train = want_int(v, key);
        } else if (key == "n_test") {
            cfg.n_test = want_int(v, key);
        } else if (key == "magnitude") {
            cfg.magnitude = want_number(v, key);
        } else if (key == "decimate_fraction") {
            cfg.decimate_fraction = want_number(v, key);
        } else if (key == "kp2d_min_nodes") {
            cfg.kp2d_min_nodes = want_int(v, key);
        } else if (key == "kp2d_max_nodes") {
            cfg.kp2d_max_nodes = want_int(v, key);
        } else if (key == "kp2d_embed_dim") {
            cfg.kp2d_embed_dim = want_int(v, key);
        } else if (key == "kp2d_signal_noise") {
            cfg.kp2d_signal_noise = want_number(v, key);
        } else if (key == "kp2d_position_noise") {
            cfg.kp2d_position_noise = want_number(v, key);
        } else if (key == "kp2d_data_dir") {
            cfg.kp2d_data_dir = want_string(v, key);
        } else {
            fail("parse", path + ": unknown config key '" + key + "'");
        }
    }
    apply_cache_env(cfg);
    cfg.validate();
    return cfg;
}

}  // namespace smoothcorr
