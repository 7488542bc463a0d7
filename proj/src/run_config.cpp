#include "sadlr/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "sadlr/errors.hpp"

namespace sadlr {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename Fn>
auto parse_number(const std::string& key, const std::string& value, Fn fn) {
    try {
        std::size_t used = 0;
        auto out = fn(value, &used);
        if (used != value.size()) {
            throw std::invalid_argument("trailing characters");
        }
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    }
}

int to_int(const std::string& key, const std::string& v) {
    return parse_number(key, v, [](const std::string& s, std::size_t* n) { return std::stoi(s, n); });
}

double to_double(const std::string& key, const std::string& v) {
    return parse_number(key, v, [](const std::string& s, std::size_t* n) { return std::stod(s, n); });
}

} // namespace

std::vector<std::string> split_values(const std::string& text) {
    std::vector<std::string> out;
    std::string current;
    int depth = 0;
    for (char ch : text) {
        if (ch == '[') {
            ++depth;
        } else if (ch == ']') {
            --depth;
        }
        if (ch == ',' && depth == 0) {
            out.push_back(trim(current));
            current.clear();
        } else {
            current += ch;
        }
    }
    if (!trim(current).empty()) {
        out.push_back(trim(current));
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::string body = trim(text);
    if (!body.empty() && body.front() == '[' && body.back() == ']') {
        body = body.substr(1, body.size() - 2);
    }
    std::vector<int> out;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!trim(item).empty()) {
            out.push_back(to_int("list", trim(item)));
        }
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::string body = trim(text);
    if (!body.empty() && body.front() == '[' && body.back() == ']') {
        body = body.substr(1, body.size() - 2);
    }
    std::vector<double> out;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!trim(item).empty()) {
            out.push_back(to_double("list", trim(item)));
        }
    }
    return out;
}

void RunConfig::validate() const {
    model.validate();
    if (epochs < 1 || batch_size < 1) {
        throw ConfigError("epochs and batch_size must be >= 1");
    }
    if (!(lr > 0.0) || weight_decay < 0.0 || poly_power < 0.0) {
        throw ConfigError("lr must be positive; weight_decay and poly_power non-negative");
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "seed") {
        seed = parse_number(key, value, [](const std::string& s, std::size_t* n) { return std::stoull(s, n); });
    } else if (key == "epochs") {
        epochs = to_int(key, value);
    } else if (key == "batch_size") {
        batch_size = to_int(key, value);
    } else if (key == "lr") {
        lr = to_double(key, value);
    } else if (key == "weight_decay") {
        weight_decay = to_double(key, value);
    } else if (key == "poly_power") {
        poly_power = to_double(key, value);
    } else if (key == "iterations") {
        // Loss weights follow the preset unless set explicitly afterwards.
        model.head.iterations = to_int(key, value);
        model.head.lambdas = lambda_preset(model.head.iterations);
    } else if (key == "channels") {
        model.head.channels = to_int(key, value);
        model.encoder.channels = model.head.channels;
    } else if (key == "lang_channels") {
        model.encoder.lang_channels = to_int(key, value);
    } else if (key == "vocab") {
        model.encoder.vocab = to_int(key, value);
    } else if (key == "structure") {
        model.head.structure = parse_int_list(value);
    } else if (key == "lambdas") {
        model.head.lambdas = value == "preset" ? lambda_preset(model.head.iterations) : parse_double_list(value);
    } else if (key == "update_mode") {
        model.head.update_mode = parse_update_mode(value);
    } else if (key == "ln_eps") {
        model.head.ln_eps = to_double(key, value);
    } else if (key == "train_data") {
        train_data = value;
    } else if (key == "val_data") {
        val_data = value;
    } else if (key == "out") {
        out_dir = value;
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

std::string RunConfig::to_text() const {
    std::ostringstream out;
    const auto list = [](const auto& xs, auto fmt) {
        std::string s;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            s += (i ? "," : "") + fmt(xs[i]);
        }
        return s;
    };
    out << "seed=" << seed << "\n";
    out << "epochs=" << epochs << "\n";
    out << "batch_size=" << batch_size << "\n";
    out << "lr=" << exact(lr) << "\n";
    out << "weight_decay=" << exact(weight_decay) << "\n";
    out << "poly_power=" << exact(poly_power) << "\n";
    out << "iterations=" << model.head.iterations << "\n";
    out << "channels=" << model.head.channels << "\n";
    out << "lang_channels=" << model.encoder.lang_channels << "\n";
    out << "vocab=" << model.encoder.vocab << "\n";
    out << "structure=" << list(model.head.structure, [](int v) { return std::to_string(v); }) << "\n";
    out << "lambdas=" << list(model.head.lambdas, exact) << "\n";
    out << "update_mode=" << to_string(model.head.update_mode) << "\n";
    out << "ln_eps=" << exact(model.head.ln_eps) << "\n";
    out << "train_data=" << train_data << "\n";
    out << "val_data=" << val_data << "\n";
    out << "out=" << out_dir << "\n";
    return out.str();
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        }
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

} // namespace sadlr
