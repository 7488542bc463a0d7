#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sadlr/errors.hpp"
#include "sadlr/pgm.hpp"
#include "sadlr/refshapes.hpp"

using namespace sadlr;
using namespace sadlr::refshapes;
namespace fs = std::filesystem;

namespace {

// Independent checker: attribute semantics written out longhand.
bool holds(const Scene& s, std::size_t i, int word) {
    const SceneObject& o = s.objects[i];
    auto all_others = [&](auto pred) {
        for (std::size_t j = 0; j < s.objects.size(); ++j) {
            if (j != i && !pred(s.objects[j])) {
                return false;
            }
        }
        return true;
    };
    switch (word) {
    case 1: return o.color == Color::red;
    case 2: return o.color == Color::green;
    case 3: return o.color == Color::blue;
    case 4: return o.shape == ShapeKind::square;
    case 5: return o.shape == ShapeKind::circle;
    case 6: return o.shape == ShapeKind::triangle;
    case 7: return all_others([&](const SceneObject& p) { return o.cx < p.cx; });
    case 8: return all_others([&](const SceneObject& p) { return o.cx > p.cx; });
    case 9: return all_others([&](const SceneObject& p) { return o.cy < p.cy; });
    case 10: return all_others([&](const SceneObject& p) { return o.cy > p.cy; });
    default: return false;
    }
}

BinaryMask draw(const SceneObject& o) {
    BinaryMask m(kCanvas, kCanvas);
    for (int y = 0; y < kCanvas; ++y) {
        for (int x = 0; x < kCanvas; ++x) {
            const double dx = x - o.cx, dy = y - o.cy, r = o.radius;
            bool in = false;
            if (o.shape == ShapeKind::square) {
                in = std::max(std::abs(dx), std::abs(dy)) <= r;
            } else if (o.shape == ShapeKind::circle) {
                in = std::hypot(dx, dy) <= r + 1e-9;
            } else {
                // apex (cx, cy - r), base row cy + r spanning cx - r .. cx + r
                const double half_width = (dy + r) / 2.0;
                in = dy >= -r && dy <= r && std::abs(dx) <= half_width;
            }
            m.set(y, x, in);
        }
    }
    return m;
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("sadlr_test_" + name); }

} // namespace

TEST_CASE("generation is deterministic") {
    const Sample a = generate_sample(7), b = generate_sample(7);
    CHECK(a.same_payload(b));
    CHECK(encode_dataset(generate_dataset(10, 7)) == encode_dataset(generate_dataset(10, 7)));
    CHECK_FALSE(generate_sample(8).same_payload(a));
}

TEST_CASE("describe on hand-built scenes") {
    Scene single{{SceneObject{ShapeKind::square, Color::red, 20, 20, 4}}};
    CHECK(describe(single, 0) == std::vector<int>{Token::square});

    Scene twins{{SceneObject{ShapeKind::circle, Color::blue, 10, 20, 3},
                 SceneObject{ShapeKind::circle, Color::blue, 30, 20, 3}}};
    CHECK(describe(twins, 0) == std::vector<int>{Token::left});
    CHECK(describe(twins, 1) == std::vector<int>{Token::right});

    // middle of three identical objects in a row
    Scene column{{SceneObject{ShapeKind::circle, Color::blue, 10, 10, 3},
                  SceneObject{ShapeKind::circle, Color::blue, 30, 10, 3},
                  SceneObject{ShapeKind::circle, Color::blue, 20, 10, 3}}};
    CHECK_FALSE(describe(column, 2).has_value());
}

TEST_CASE("RefShapes properties over 10,000 samples") {
    std::array<int, 3> shape_hits{}, color_hits{};
    const int n = 10000;
    int ambiguous = 0, bad_mask = 0, bad_image = 0, bad_scene = 0;
    for (int seed = 0; seed < n; ++seed) {
        const Sample s = generate_sample(static_cast<std::uint64_t>(seed));
        const auto& objs = s.scene.objects;
        if (objs.size() < 2 || objs.size() > 4) {
            ++bad_scene;
        }
        for (std::size_t i = 0; i < objs.size(); ++i) {
            const auto& a = objs[i];
            if (a.cx - a.radius < 0 || a.cy - a.radius < 0 || a.cx + a.radius >= kCanvas ||
                a.cy + a.radius >= kCanvas) {
                ++bad_scene;
            }
            for (std::size_t j = i + 1; j < objs.size(); ++j) {
                const auto& b = objs[j];
                const bool apart = a.cx + a.radius < b.cx - b.radius || b.cx + b.radius < a.cx - a.radius ||
                                   a.cy + a.radius < b.cy - b.radius || b.cy + b.radius < a.cy - a.radius;
                if (!apart) {
                    ++bad_scene;
                }
            }
        }
        int matches = 0;
        for (std::size_t i = 0; i < objs.size(); ++i) {
            bool all = true;
            for (int k = 0; k < s.tokens.valid; ++k) {
                all = all && holds(s.scene, i, s.tokens.ids[static_cast<std::size_t>(k)]);
            }
            matches += all ? 1 : 0;
        }
        const auto target = static_cast<std::size_t>(s.target);
        bool target_ok = true;
        for (int k = 0; k < s.tokens.valid; ++k) {
            target_ok = target_ok && holds(s.scene, target, s.tokens.ids[static_cast<std::size_t>(k)]);
        }
        if (matches != 1 || !target_ok) {
            ++ambiguous;
        }
        if (!(s.gt == draw(objs[target]))) {
            ++bad_mask;
        }
        if (seed < 500) {
            BinaryMask lit(kCanvas, kCanvas);
            for (int y = 0; y < kCanvas; ++y) {
                for (int x = 0; x < kCanvas; ++x) {
                    float total = 0;
                    for (int c = 0; c < 3; ++c) {
                        total += s.image.at(c, y, x);
                    }
                    lit.set(y, x, total > 0);
                }
            }
            BinaryMask expect(kCanvas, kCanvas);
            for (const auto& o : objs) {
                const auto m = draw(o);
                for (int y = 0; y < kCanvas; ++y) {
                    for (int x = 0; x < kCanvas; ++x) {
                        if (m.get(y, x)) {
                            expect.set(y, x, true);
                            if (s.image.at(static_cast<int>(o.color), y, x) != 1.0f) {
                                ++bad_image;
                            }
                        }
                    }
                }
            }
            if (!(lit == expect)) {
                ++bad_image;
            }
        }
        ++shape_hits[static_cast<std::size_t>(objs[target].shape)];
        ++color_hits[static_cast<std::size_t>(objs[target].color)];
        CHECK(s.tokens.valid >= 1);
        CHECK(s.tokens.valid <= kMaxTokens);
    }
    CHECK(ambiguous == 0);
    CHECK(bad_mask == 0);
    CHECK(bad_image == 0);
    CHECK(bad_scene == 0);
    for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(shape_hits[static_cast<std::size_t>(k)] / double(n) - 1.0 / 3) <= 0.03);
        CHECK(std::abs(color_hits[static_cast<std::size_t>(k)] / double(n) - 1.0 / 3) <= 0.03);
    }
}

TEST_CASE("RFS1 round trip and errors") {
    const auto samples = generate_dataset(10, 100);
    const fs::path path = temp_path("roundtrip.rfs");
    write_dataset(samples, path.string());
    const auto back = read_dataset(path.string());
    REQUIRE(back.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(back[i].same_payload(samples[i]));
    }
    CHECK(fs::file_size(path) == dataset_file_size(10));
    fs::remove(path);

    // "RFS1" + count, then per sample two extents, RGB f32, mask u8, four u16 ids and a u16 count.
    const std::size_t per_sample = 4 + 4 + 3 * 48 * 48 * 4 + 48 * 48 + 4 * 2 + 2;
    CHECK(per_sample == 29970);
    CHECK(dataset_file_size(2500) == 8 + 2500 * per_sample);
    CHECK(dataset_file_size(2500) == 74925008);
    CHECK(encode_dataset(std::span<const Sample>{}).size() == 8);
    CHECK(decode_dataset(encode_dataset(std::span<const Sample>{})).empty());

    CHECK_THROWS_AS(decode_dataset({}), FormatError);
    auto bytes = encode_dataset(samples);
    bytes[0] = 'X';
    try {
        decode_dataset(bytes);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("RFS1") != std::string::npos);
        CHECK(e.offset() == 0);
    }
    bytes = encode_dataset(samples);
    bytes.resize(bytes.size() - 5);
    try {
        decode_dataset(bytes);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() > 8);
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
    CHECK_THROWS_AS(read_dataset(temp_path("missing.rfs").string()), std::runtime_error);
}

TEST_CASE("PGM export") {
    const Sample s = generate_sample(3);
    const fs::path mask_path = temp_path("mask.pgm");
    pgm::write_mask(mask_path.string(), s.gt);
    CHECK(pgm::read_mask(mask_path.string()) == s.gt);
    const auto raw = pgm::read(mask_path.string());
    CHECK(raw.width == 48);
    CHECK(raw.height == 48);
    for (auto v : raw.pixels) {
        CHECK((v == 0 || v == 255));
    }
    std::ifstream in(mask_path, std::ios::binary);
    std::string magic(2, ' ');
    in.read(magic.data(), 2);
    CHECK(magic == "P5");
    fs::remove(mask_path);

    const fs::path stem = temp_path("image");
    pgm::write_channels(stem.string(), s.image);
    for (int c = 0; c < 3; ++c) {
        const fs::path p = stem.string() + "_c" + std::to_string(c) + ".pgm";
        CHECK(fs::exists(p));
        fs::remove(p);
    }
}
