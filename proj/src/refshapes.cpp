#include "sadlr/refshapes.hpp"

#include <algorithm>
#include <array>
#include <random>

#include "binary_io.hpp"
#include "sadlr/errors.hpp"

namespace sadlr::refshapes {

namespace {

constexpr int kMinRadius = 3;
constexpr int kMaxRadius = 8;
constexpr int kMaxPlacementTries = 200;

constexpr std::array<std::array<float, 3>, 3> kPalette{{{1.0f, 0.0f, 0.0f}, {0.0f, 1.0f, 0.0f}, {0.0f, 0.0f, 1.0f}}};

bool boxes_overlap(const SceneObject& a, const SceneObject& b) {
    const bool x_apart = a.cx + a.radius < b.cx - b.radius || b.cx + b.radius < a.cx - a.radius;
    const bool y_apart = a.cy + a.radius < b.cy - b.radius || b.cy + b.radius < a.cy - a.radius;
    return !(x_apart || y_apart);
}

std::optional<Scene> draw_scene(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> count_dist(2, 4);
    std::uniform_int_distribution<int> kind_dist(0, 2);
    std::uniform_int_distribution<int> radius_dist(kMinRadius, kMaxRadius);
    Scene scene;
    const int count = count_dist(rng);
    for (int i = 0; i < count; ++i) {
        SceneObject obj;
        obj.shape = static_cast<ShapeKind>(kind_dist(rng));
        obj.color = static_cast<Color>(kind_dist(rng));
        obj.radius = radius_dist(rng);
        std::uniform_int_distribution<int> center_dist(obj.radius, kCanvas - 1 - obj.radius);
        bool placed = false;
        for (int attempt = 0; attempt < kMaxPlacementTries && !placed; ++attempt) {
            obj.cx = center_dist(rng);
            obj.cy = center_dist(rng);
            placed = std::none_of(scene.objects.begin(), scene.objects.end(),
                                  [&](const SceneObject& other) { return boxes_overlap(obj, other); });
        }
        if (!placed) {
            return std::nullopt;
        }
        scene.objects.push_back(obj);
    }
    return scene;
}

// Extreme along one axis: strictly smaller (or larger) than every other object.
bool is_extreme(const Scene& scene, int index, bool use_x, bool smallest) {
    const auto key = [use_x](const SceneObject& o) { return use_x ? o.cx : o.cy; };
    const int mine = key(scene.objects[static_cast<std::size_t>(index)]);
    for (std::size_t j = 0; j < scene.objects.size(); ++j) {
        if (static_cast<int>(j) == index) {
            continue;
        }
        const int other = key(scene.objects[j]);
        if (smallest ? other <= mine : other >= mine) {
            return false;
        }
    }
    return true;
}

} // namespace

std::string token_name(int id) {
    static constexpr std::array<const char*, kVocabSize> kNames{
        "<pad>", "red", "green", "blue", "square", "circle", "triangle", "left", "right", "top", "bottom"};
    if (id < 0 || id >= kVocabSize) {
        return "<unk>";
    }
    return kNames[static_cast<std::size_t>(id)];
}

int color_token(Color c) { return Token::red + static_cast<int>(c); }
int shape_token(ShapeKind s) { return Token::square + static_cast<int>(s); }

bool Sample::same_payload(const Sample& other) const {
    return image == other.image && tokens == other.tokens && gt == other.gt;
}

bool covers(const SceneObject& obj, int x, int y) {
    const int dx = x - obj.cx;
    const int dy = y - obj.cy;
    const int r = obj.radius;
    switch (obj.shape) {
    case ShapeKind::square:
        return std::abs(dx) <= r && std::abs(dy) <= r;
    case ShapeKind::circle:
        return dx * dx + dy * dy <= r * r;
    case ShapeKind::triangle:
        // Apex at (cx, cy - r), base from (cx - r, cy + r) to (cx + r, cy + r).
        return dy <= r && 2 * std::abs(dx) <= dy + r;
    }
    return false;
}

BinaryMask rasterize(const SceneObject& obj, int height, int width) {
    BinaryMask mask(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            mask.set(y, x, covers(obj, x, y));
        }
    }
    return mask;
}

bool satisfies(const Scene& scene, int index, int token) {
    const SceneObject& obj = scene.objects.at(static_cast<std::size_t>(index));
    switch (token) {
    case Token::red:
    case Token::green:
    case Token::blue:
        return color_token(obj.color) == token;
    case Token::square:
    case Token::circle:
    case Token::triangle:
        return shape_token(obj.shape) == token;
    case Token::left:
        return is_extreme(scene, index, true, true);
    case Token::right:
        return is_extreme(scene, index, true, false);
    case Token::top:
        return is_extreme(scene, index, false, true);
    case Token::bottom:
        return is_extreme(scene, index, false, false);
    default:
        throw ContractError("satisfies: token " + std::to_string(token) + " is not an attribute word");
    }
}

int count_matches(const Scene& scene, std::span<const int> words) {
    int matches = 0;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const bool all = std::all_of(words.begin(), words.end(),
                                     [&](int w) { return satisfies(scene, static_cast<int>(i), w); });
        matches += all ? 1 : 0;
    }
    return matches;
}

std::optional<std::vector<int>> describe(const Scene& scene, int target) {
    const SceneObject& obj = scene.objects.at(static_cast<std::size_t>(target));
    std::vector<int> words;
    for (int pos : {Token::left, Token::right, Token::top, Token::bottom}) {
        if (satisfies(scene, target, pos)) {
            words.push_back(pos);
            break;
        }
    }
    words.push_back(color_token(obj.color));
    words.push_back(shape_token(obj.shape));
    if (count_matches(scene, words) != 1) {
        return std::nullopt;
    }
    // Drop in template order; at least one word always remains.
    for (std::size_t i = 0; i < words.size() && words.size() > 1;) {
        std::vector<int> trial = words;
        trial.erase(trial.begin() + static_cast<long>(i));
        if (count_matches(scene, trial) == 1) {
            words = std::move(trial);
        } else {
            ++i;
        }
    }
    return words;
}

Sample generate_sample(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (;;) {
        std::optional<Scene> scene = draw_scene(rng);
        if (!scene) {
            continue;
        }
        std::uniform_int_distribution<int> pick(0, static_cast<int>(scene->objects.size()) - 1);
        const int target = pick(rng);
        std::optional<std::vector<int>> words = describe(*scene, target);
        if (!words) {
            continue;
        }
        Sample sample;
        sample.target = target;
        sample.tokens.ids.assign(kMaxTokens, Token::pad);
        std::copy(words->begin(), words->end(), sample.tokens.ids.begin());
        sample.tokens.valid = static_cast<int>(words->size());
        sample.image = Tensor<float>(Shape{3, kCanvas, kCanvas});
        for (const SceneObject& o : scene->objects) {
            const auto& rgb = kPalette[static_cast<std::size_t>(o.color)];
            for (int y = o.cy - o.radius; y <= o.cy + o.radius; ++y) {
                for (int x = o.cx - o.radius; x <= o.cx + o.radius; ++x) {
                    if (covers(o, x, y)) {
                        for (int c = 0; c < 3; ++c) {
                            sample.image.at(c, y, x) = rgb[static_cast<std::size_t>(c)];
                        }
                    }
                }
            }
        }
        sample.gt = rasterize(scene->objects[static_cast<std::size_t>(target)]);
        sample.scene = std::move(*scene);
        return sample;
    }
}

std::vector<Sample> generate_dataset(std::size_t count, std::uint64_t first_seed) {
    std::vector<Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(generate_sample(first_seed + i));
    }
    return out;
}

std::size_t dataset_file_size(std::size_t count, int height, int width) {
    const std::size_t pixels = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    const std::size_t per_sample = 2 * sizeof(std::uint32_t) + 3 * pixels * sizeof(float) + pixels +
                                   kMaxTokens * sizeof(std::uint16_t) + sizeof(std::uint16_t);
    return 4 + sizeof(std::uint32_t) + count * per_sample;
}

std::vector<std::uint8_t> encode_dataset(std::span<const Sample> samples) {
    detail::ByteWriter w;
    w.put_bytes("RFS1", 4);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(samples.size()));
    for (const Sample& s : samples) {
        const int h = s.gt.height();
        const int wd = s.gt.width();
        if (s.image.shape() != Shape{3, h, wd} || s.tokens.ids.size() != kMaxTokens) {
            throw ShapeError("encode_dataset: sample layout does not match the RFS1 record");
        }
        w.put<std::uint32_t>(static_cast<std::uint32_t>(h));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(wd));
        w.put_bytes(s.image.ptr(), s.image.size() * sizeof(float));
        w.put_bytes(s.gt.bits().data(), s.gt.size());
        for (int id : s.tokens.ids) {
            w.put<std::uint16_t>(static_cast<std::uint16_t>(id));
        }
        w.put<std::uint16_t>(static_cast<std::uint16_t>(s.tokens.valid));
    }
    return std::move(w.bytes());
}

std::vector<Sample> decode_dataset(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes);
    char magic[4];
    r.get_bytes(magic, 4, "magic (expected \"RFS1\")");
    if (std::string(magic, 4) != "RFS1") {
        throw FormatError("bad dataset magic, expected \"RFS1\"", 0);
    }
    const auto count = r.get<std::uint32_t>("sample count");
    std::vector<Sample> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t start = r.offset();
        const auto h = r.get<std::uint32_t>("image height");
        const auto w = r.get<std::uint32_t>("image width");
        if (h == 0 || w == 0 || h > 4096 || w > 4096) {
            throw FormatError("implausible image extent " + std::to_string(h) + "x" + std::to_string(w), start);
        }
        Sample s;
        s.image = Tensor<float>(Shape{3, static_cast<int>(h), static_cast<int>(w)});
        r.get_bytes(s.image.ptr(), s.image.size() * sizeof(float), "image payload");
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(h) * w);
        const std::size_t mask_at = r.offset();
        r.get_bytes(bits.data(), bits.size(), "mask payload");
        if (std::any_of(bits.begin(), bits.end(), [](std::uint8_t b) { return b > 1; })) {
            throw FormatError("mask entries must be 0 or 1", mask_at);
        }
        s.gt = BinaryMask(static_cast<int>(h), static_cast<int>(w), std::move(bits));
        s.tokens.ids.resize(kMaxTokens);
        for (auto& id : s.tokens.ids) {
            id = r.get<std::uint16_t>("token ids");
        }
        const std::size_t valid_at = r.offset();
        s.tokens.valid = r.get<std::uint16_t>("valid count");
        try {
            s.tokens.validate();
        } catch (const ContractError& e) {
            throw FormatError(e.what(), valid_at);
        }
        out.push_back(std::move(s));
    }
    if (!r.at_end()) {
        throw FormatError("trailing bytes after " + std::to_string(count) + " samples", r.offset());
    }
    return out;
}

void write_dataset(std::span<const Sample> samples, const std::string& path) {
    detail::write_file(path, encode_dataset(samples));
}

std::vector<Sample> read_dataset(const std::string& path) { return decode_dataset(detail::read_file(path)); }

} // namespace sadlr::refshapes
