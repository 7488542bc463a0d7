#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sadlr/encoder.hpp"
#include "sadlr/mask.hpp"
#include "sadlr/tensor.hpp"

namespace sadlr::refshapes {

inline constexpr int kCanvas = 48;
inline constexpr int kMaxTokens = 4;
inline constexpr int kVocabSize = 11;

enum class ShapeKind : std::uint8_t { square, circle, triangle };
enum class Color : std::uint8_t { red, green, blue };

// Token ids. 0 is padding.
enum Token : int {
    pad = 0,
    red = 1,
    green = 2,
    blue = 3,
    square = 4,
    circle = 5,
    triangle = 6,
    left = 7,
    right = 8,
    top = 9,
    bottom = 10,
};

std::string token_name(int id);
int color_token(Color c);
int shape_token(ShapeKind s);

struct SceneObject {
    ShapeKind shape = ShapeKind::square;
    Color color = Color::red;
    int cx = 0;
    int cy = 0;
    int radius = 1;
};

struct Scene {
    std::vector<SceneObject> objects;
};

struct Sample {
    Tensor<float> image; // [3 x 48 x 48] in [0, 1]
    TokenSeq tokens;
    BinaryMask gt;       // 48 x 48
    int target = -1;     // index into scene.objects; -1 when loaded from disk
    Scene scene;

    /// Equality over the serialized fields only.
    bool same_payload(const Sample& other) const;
};

/// True when pixel (x, y) lies inside the object's hard rasterization.
bool covers(const SceneObject& obj, int x, int y);
BinaryMask rasterize(const SceneObject& obj, int height = kCanvas, int width = kCanvas);

/// Whether object `index` satisfies the attribute word `token`. Position
/// words compare centers against every object in the scene.
bool satisfies(const Scene& scene, int index, int token);

/// Shortest "[position] [color] [shape]" description singling out `target`,
/// dropping attributes greedily (position, then color, then shape) while the
/// description stays unique and non-empty. nullopt if even the full
/// description is ambiguous.
std::optional<std::vector<int>> describe(const Scene& scene, int target);

/// Number of scene objects satisfying every word of `words`.
int count_matches(const Scene& scene, std::span<const int> words);

Sample generate_sample(std::uint64_t seed);
/// `count` samples from seeds first_seed, first_seed + 1, ...
std::vector<Sample> generate_dataset(std::size_t count, std::uint64_t first_seed);

/// RFS1 layout, little-endian: "RFS1" | u32 count | per sample: u32 H0, u32 W0,
/// f32 image[3*H0*W0], u8 mask[H0*W0], u16 ids[4], u16 valid.
std::vector<std::uint8_t> encode_dataset(std::span<const Sample> samples);
std::vector<Sample> decode_dataset(const std::vector<std::uint8_t>& bytes);
void write_dataset(std::span<const Sample> samples, const std::string& path);
std::vector<Sample> read_dataset(const std::string& path);
/// Exact file size for `count` samples at the default canvas.
std::size_t dataset_file_size(std::size_t count, int height = kCanvas, int width = kCanvas);

} // namespace sadlr::refshapes
