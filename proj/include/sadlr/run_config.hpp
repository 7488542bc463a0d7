#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sadlr/model.hpp"

namespace sadlr {

/// Everything needed to reproduce a training run. Serialized as flat
/// `key=value` lines; '#' starts a comment.
struct RunConfig {
    std::uint64_t seed = 0;
    int epochs = 15;
    int batch_size = 16;
    double lr = 1e-3;
    double weight_decay = 1e-2;
    double poly_power = 0.9;
    ModelConfig model;
    std::string train_data;
    std::string val_data;
    std::string out_dir = "run";

    void validate() const;
    /// Applies one key; unknown keys throw ConfigError.
    void set(const std::string& key, const std::string& value);
    std::string to_text() const;

    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);
};

/// "8,32" or "[8,32]" -> {8, 32}
std::vector<int> parse_int_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);
/// Splits on commas that are not inside brackets: "[8],[8,32]" -> {"[8]", "[8,32]"}.
std::vector<std::string> split_values(const std::string& text);

} // namespace sadlr
