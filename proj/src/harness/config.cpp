#include "gwa/harness/config.hpp"

#include "gwa/error.hpp"

#include <fstream>
#include <functional>
#include <sstream>

namespace gwa::harness {

namespace {

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string strip_comment(const std::string& line)
{
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') {
            quoted = !quoted;
        } else if (line[i] == '#' && !quoted) {
            return line.substr(0, i);
        }
    }
    return line;
}

double to_double(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument(v);
        }
        return d;
    } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigError, "'" + key + "' expects a number, got '" + v + "'");
    }
}

std::uint64_t to_uint(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        if (!v.empty() && v[0] == '-') {
            throw std::invalid_argument(v);
        }
        const auto u = std::stoull(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument(v);
        }
        return u;
    } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigError,
                    "'" + key + "' expects a non-negative integer, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true") return true;
    if (v == "false") return false;
    throw Error(ErrorCode::ConfigError, "'" + key + "' expects true or false, got '" + v + "'");
}

} // namespace

std::map<std::string, std::string> parse_flat_config(const std::string& text)
{
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(strip_comment(line));
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": bad section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": empty key");
        }
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        if (!section.empty()) {
            key = section + "." + key;
        }
        if (!out.emplace(key, value).second) {
            throw Error(ErrorCode::ConfigError, "duplicate key '" + key + "'");
        }
    }
    return out;
}

RunConfig run_config_from_text(const std::string& text)
{
    RunConfig rc;
    auto& t = rc.trainer;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> setters = {
        {"model", [&](auto& k, auto& v) {
             if (v == "softmax" || v == "softmax_regression") t.model.hidden_dim = 0;
             else if (v == "mlp") { if (t.model.hidden_dim == 0) t.model.hidden_dim = 64; }
             else throw Error(ErrorCode::ConfigError, "'" + k + "': unknown model '" + v + "'");
         }},
        {"hidden_dim", [&](auto& k, auto& v) { t.model.hidden_dim = to_uint(k, v); }},
        {"activation", [&](auto& k, auto& v) {
             if (v == "relu") t.model.activation = Activation::Relu;
             else if (v == "tanh") t.model.activation = Activation::Tanh;
             else throw Error(ErrorCode::ConfigError, "'" + k + "': unknown activation '" + v + "'");
         }},
        {"optimizer", [&](auto& k, auto& v) {
             if (v == "sgd") t.optimizer.kind = OptimizerKind::Sgd;
             else if (v == "adam") t.optimizer.kind = OptimizerKind::Adam;
             else throw Error(ErrorCode::ConfigError, "'" + k + "': unknown optimizer '" + v + "'");
         }},
        {"lr", [&](auto& k, auto& v) { t.optimizer.lr = to_double(k, v); }},
        {"momentum", [&](auto& k, auto& v) { t.optimizer.momentum = to_double(k, v); }},
        {"beta1", [&](auto& k, auto& v) { t.optimizer.beta1 = to_double(k, v); }},
        {"beta2", [&](auto& k, auto& v) { t.optimizer.beta2 = to_double(k, v); }},
        {"eps", [&](auto& k, auto& v) { t.optimizer.eps = to_double(k, v); }},
        {"weight_decay", [&](auto& k, auto& v) { t.optimizer.weight_decay = to_double(k, v); }},
        {"epochs", [&](auto& k, auto& v) { t.epochs = to_uint(k, v); }},
        {"batch_size", [&](auto& k, auto& v) { t.batch_size = to_uint(k, v); }},
        {"seed", [&](auto& k, auto& v) { t.seed = to_uint(k, v); }},
        {"label_noise", [&](auto& k, auto& v) { t.label_noise = to_double(k, v); }},
        {"random_labels", [&](auto& k, auto& v) { t.random_labels = to_bool(k, v); }},
        {"val_fraction", [&](auto& k, auto& v) { t.val_fraction = to_double(k, v); }},
        {"pretrain_epochs", [&](auto& k, auto& v) { t.pretrain_epochs = to_uint(k, v); }},
        {"pretrain_size", [&](auto& k, auto& v) { t.pretrain_size = to_uint(k, v); }},
        {"mode", [&](auto& k, auto& v) {
             if (v == "scratch") t.mode = StopMode::Scratch;
             else if (v == "finetune") t.mode = StopMode::Finetune;
             else throw Error(ErrorCode::ConfigError, "'" + k + "': unknown mode '" + v + "'");
         }},
        {"warmup_fraction", [&](auto& k, auto& v) { t.warmup_fraction = to_double(k, v); }},
        {"finetune_window", [&](auto& k, auto& v) { t.finetune_window = to_uint(k, v); }},
        {"dataset", [&](auto&, auto& v) { t.dataset.kind = dataset_kind_from_string(v); }},
        {"dataset.classes", [&](auto& k, auto& v) { t.dataset.classes = to_uint(k, v); }},
        {"dataset.dim", [&](auto& k, auto& v) { t.dataset.dim = to_uint(k, v); }},
        {"dataset.separation", [&](auto& k, auto& v) { t.dataset.separation = to_double(k, v); }},
        {"dataset.noise", [&](auto& k, auto& v) { t.dataset.noise = to_double(k, v); }},
        {"dataset.train_size", [&](auto& k, auto& v) { t.dataset.train_size = to_uint(k, v); }},
        {"dataset.test_size", [&](auto& k, auto& v) { t.dataset.test_size = to_uint(k, v); }},
        {"dataset.test_fraction", [&](auto& k, auto& v) { t.dataset.test_fraction = to_double(k, v); }},
        {"dataset.path", [&](auto&, auto& v) { t.dataset.path = v; }},
        {"dataset.labels_path", [&](auto&, auto& v) { t.dataset.labels_path = v; }},
        {"dataset.subsample", [&](auto& k, auto& v) { t.dataset.subsample = to_uint(k, v); }},
        {"dataset.shift", [&](auto& k, auto& v) { t.dataset.shift = to_double(k, v); }},
        {"alignment.include_bias", [&](auto& k, auto& v) { t.alignment.include_bias = to_bool(k, v); }},
        {"gwa.beta", [&](auto& k, auto& v) { t.gwa.beta = to_double(k, v); }},
        {"gwa.min_samples", [&](auto& k, auto& v) { t.gwa.min_samples = to_uint(k, v); }},
        {"projection.enabled", [&](auto& k, auto& v) { t.projection.enabled = to_bool(k, v); }},
        {"projection.dim", [&](auto& k, auto& v) { t.projection.dim = to_uint(k, v); }},
        {"projection.seed", [&](auto& k, auto& v) { t.projection.seed = to_uint(k, v); }},
        {"output.dir", [&](auto&, auto& v) { rc.out_dir = v; }},
        {"output.per_sample", [&](auto& k, auto& v) { rc.per_sample = to_bool(k, v); }},
    };

    const auto pairs = parse_flat_config(text);
    // "model" must be applied before "hidden_dim" can be overridden by it.
    if (auto it = pairs.find("model"); it != pairs.end()) {
        setters.at("model")(it->first, it->second);
    }
    for (const auto& [key, value] : pairs) {
        if (key == "model") {
            continue;
        }
        const auto it = setters.find(key);
        if (it == setters.end()) {
            throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
        }
        it->second(key, value);
    }
    if (pairs.count("model") && pairs.at("model") == "mlp" && t.model.hidden_dim == 0) {
        throw Error(ErrorCode::ConfigError, "mlp needs hidden_dim > 0");
    }
    if (pairs.count("model") && pairs.at("model") != "mlp" && pairs.count("hidden_dim")) {
        throw Error(ErrorCode::ConfigError, "hidden_dim only applies to model = \"mlp\"");
    }
    t.validate();
    return rc;
}

RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return run_config_from_text(ss.str());
}

} // namespace gwa::harness
