#pragma once

// Line-oriented `key = value` training configuration. '#' starts a comment.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "acdk/trainer.hpp"

namespace acdk {

class ConfigError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& v, const std::string& where) {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(where + ": expected a number, got '" + v + "'");
    return d;
}

inline long long to_int(const std::string& v, const std::string& where) {
    long long x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(where + ": expected an integer, got '" + v + "'");
    return x;
}

inline std::uint64_t to_u64(const std::string& v, const std::string& where) {
    std::uint64_t x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(where + ": expected an unsigned integer, got '" + v + "'");
    return x;
}

inline bool to_bool(const std::string& v, const std::string& where) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(where + ": expected a boolean, got '" + v + "'");
}

}  // namespace detail

inline TrainConfig parse_train_config(std::istream& in, const std::string& source = "config") {
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string where = source + ":" + std::to_string(lineno);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));

        if (key == "lambda1") cfg.lambda.consistency = detail::to_double(val, where);
        else if (key == "lambda2") cfg.lambda.distill = detail::to_double(val, where);
        else if (key == "lambda3") cfg.lambda.sdr = detail::to_double(val, where);
        else if (key == "lr") cfg.lr = detail::to_double(val, where);
        else if (key == "weight_decay") cfg.weight_decay = detail::to_double(val, where);
        else if (key == "batch_size") cfg.batch_size = static_cast<int>(detail::to_int(val, where));
        else if (key == "epochs") cfg.epochs = static_cast<int>(detail::to_int(val, where));
        else if (key == "scheduler.p_blur") cfg.scheduler.p_blur = detail::to_double(val, where);
        else if (key == "scheduler.p_weather") cfg.scheduler.p_weather = detail::to_double(val, where);
        else if (key == "scheduler.apply_dark") cfg.scheduler.apply_dark = detail::to_bool(val, where);
        else if (key == "sdr.metric") {
            const auto m = parse_metric(val);
            if (!m) throw ConfigError(where + ": unknown metric '" + val + "'");
            cfg.sdr.metric = *m;
        } else if (key == "sdr.paradigm") {
            const auto p = parse_paradigm(val);
            if (!p) throw ConfigError(where + ": unknown paradigm '" + val + "'");
            cfg.sdr.paradigm = *p;
        } else if (key == "sdr.patch_size") cfg.sdr.patch_size = static_cast<int>(detail::to_int(val, where));
        else if (key == "freeze_encoder") cfg.freeze_encoder = detail::to_bool(val, where);
        else if (key == "seed") cfg.seed = detail::to_u64(val, where);
        else if (key == "consistency_mode") {
            if (val == "stop_grad_weak") cfg.consistency_mode = ConsistencyMode::stop_grad_weak;
            else if (val == "both_branches") cfg.consistency_mode = ConsistencyMode::both_branches;
            else throw ConfigError(where + ": unknown consistency_mode '" + val + "'");
        } else if (key == "brightness_jitter") cfg.brightness_jitter = detail::to_double(val, where);
        else if (key == "pretrain_steps") cfg.pretrain_steps = static_cast<int>(detail::to_int(val, where));
        else if (key == "pretrain_lr") cfg.pretrain_lr = detail::to_double(val, where);
        else if (key == "input_channels") cfg.input_channels = static_cast<int>(detail::to_int(val, where));
        else throw ConfigError(where + ": unknown key '" + key + "'");
    }
    try {
        cfg.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return cfg;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    return parse_train_config(in, path.string());
}

inline std::string format_train_config(const TrainConfig& c) {
    std::ostringstream o;
    o.precision(17);
    o << "lambda1 = " << c.lambda.consistency << '\n'
      << "lambda2 = " << c.lambda.distill << '\n'
      << "lambda3 = " << c.lambda.sdr << '\n'
      << "lr = " << c.lr << '\n'
      << "weight_decay = " << c.weight_decay << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "epochs = " << c.epochs << '\n'
      << "scheduler.p_blur = " << c.scheduler.p_blur << '\n'
      << "scheduler.p_weather = " << c.scheduler.p_weather << '\n'
      << "scheduler.apply_dark = " << (c.scheduler.apply_dark ? "true" : "false") << '\n'
      << "sdr.metric = " << to_string(c.sdr.metric) << '\n'
      << "sdr.paradigm = " << to_string(c.sdr.paradigm) << '\n'
      << "sdr.patch_size = " << c.sdr.patch_size << '\n'
      << "freeze_encoder = " << (c.freeze_encoder ? "true" : "false") << '\n'
      << "seed = " << c.seed << '\n'
      << "consistency_mode = " << to_string(c.consistency_mode) << '\n'
      << "brightness_jitter = " << c.brightness_jitter << '\n'
      << "pretrain_steps = " << c.pretrain_steps << '\n'
      << "pretrain_lr = " << c.pretrain_lr << '\n'
      << "input_channels = " << c.input_channels << '\n';
    return o.str();
}

}  // namespace acdk
