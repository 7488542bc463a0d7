#include "sadlr/model.hpp"

#include <fstream>
#include <iterator>
#include <random>

#include "binary_io.hpp"
#include "sadlr/errors.hpp"

namespace sadlr {

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "' for reading");
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("write to '" + path + "' failed");
    }
}

} // namespace detail

void ModelConfig::validate() const {
    head.validate();
    if (encoder.channels != head.channels) {
        throw ConfigError("encoder channels (" + std::to_string(encoder.channels) + ") differ from head channels (" +
                          std::to_string(head.channels) + ")");
    }
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    encoder_ = std::make_unique<ToyEncoder<T>>(config_.encoder, rng);
    head_ = HeadParams<T>::init(config_.head, config_.encoder.lang_channels, rng);
}

template <typename T>
Model<T>::Model(std::unique_ptr<MultiModalEncoder<T>> encoder, HeadParams<T> head)
    : encoder_(std::move(encoder)), head_(std::move(head)) {
    if (encoder_->channels() != head_.config.channels || encoder_->lang_channels() != head_.lang_channels) {
        throw ConfigError("encoder output channels do not match the head");
    }
    config_.encoder.channels = encoder_->channels();
    config_.encoder.lang_channels = encoder_->lang_channels();
    config_.encoder.vocab = 0;
    config_.head = head_.config;
}

template <typename T>
typename Model<T>::Forward Model<T>::forward(Tape<T>& t, const Tensor<T>& image, const TokenSeq& tokens) {
    Forward out;
    out.encoded = encoder_->encode(t, image, tokens);
    out.head = sadlr_forward(t, head_, out.encoded.features, out.encoded.words, out.encoded.valid);
    return out;
}

template <typename T>
std::vector<Param<T>*> Model<T>::params() {
    std::vector<Param<T>*> out = encoder_->params();
    for (Param<T>* p : head_.params()) {
        out.push_back(p);
    }
    return out;
}

template <typename T>
void Model<T>::zero_grad() {
    for (Param<T>* p : params()) {
        p->zero_grad();
    }
}

template <typename T>
template <typename U>
void Model<T>::copy_values_from(Model<U>& other) {
    auto mine = params();
    auto theirs = other.params();
    if (mine.size() != theirs.size()) {
        throw ConfigError("copy_values_from: parameter counts differ");
    }
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (mine[i]->name != theirs[i]->name || mine[i]->value.shape() != theirs[i]->value.shape()) {
            throw ConfigError("copy_values_from: layout mismatch at " + mine[i]->name);
        }
        mine[i]->value = theirs[i]->value.template cast<T>();
    }
}

template class Model<float>;
template class Model<double>;
template void Model<float>::copy_values_from<float>(Model<float>&);
template void Model<float>::copy_values_from<double>(Model<double>&);
template void Model<double>::copy_values_from<float>(Model<float>&);
template void Model<double>::copy_values_from<double>(Model<double>&);

// SDLR layout, little-endian:
//   "SDLR" | u32 version
//   config: u32 channels, u32 lang_channels, u32 vocab, u32 iterations, u32 update_mode,
//           f64 ln_eps, u32 structure_len, u32 structure[], u32 lambda_len, f64 lambdas[]
//   u32 param_count, then per param: u16 name_len, name, u32 rank, u32 extents[], f32 values[]
template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(Model<T>& model) {
    const ModelConfig& cfg = model.config();
    detail::ByteWriter w;
    w.put_bytes("SDLR", 4);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.encoder.channels));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.encoder.lang_channels));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.encoder.vocab));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.head.iterations));
    w.put<std::uint32_t>(cfg.head.update_mode == UpdateMode::sum ? 0u : 1u);
    w.put<double>(cfg.head.ln_eps);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.head.structure.size()));
    for (int s : cfg.head.structure) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(s));
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.head.lambdas.size()));
    for (double l : cfg.head.lambdas) {
        w.put<double>(l);
    }
    auto params = model.params();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (Param<T>* p : params) {
        w.put<std::uint16_t>(static_cast<std::uint16_t>(p->name.size()));
        w.put_bytes(p->name.data(), p->name.size());
        w.put<std::uint32_t>(static_cast<std::uint32_t>(p->value.rank()));
        for (int e : p->value.shape()) {
            w.put<std::uint32_t>(static_cast<std::uint32_t>(e));
        }
        for (T v : p->value.data()) {
            w.put<float>(static_cast<float>(v));
        }
    }
    return std::move(w.bytes());
}

template <typename T>
std::unique_ptr<Model<T>> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes);
    char magic[4];
    r.get_bytes(magic, 4, "magic");
    if (std::string(magic, 4) != "SDLR") {
        throw FormatError("bad checkpoint magic, expected \"SDLR\"", 0);
    }
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (this build reads version " +
                              std::to_string(kCheckpointVersion) + ")",
                          4);
    }
    ModelConfig cfg;
    cfg.encoder.channels = static_cast<int>(r.get<std::uint32_t>("channels"));
    cfg.encoder.lang_channels = static_cast<int>(r.get<std::uint32_t>("lang_channels"));
    cfg.encoder.vocab = static_cast<int>(r.get<std::uint32_t>("vocab"));
    cfg.head.channels = cfg.encoder.channels;
    cfg.head.iterations = static_cast<int>(r.get<std::uint32_t>("iterations"));
    const auto mode = r.get<std::uint32_t>("update_mode");
    if (mode > 1) {
        throw FormatError("bad update mode " + std::to_string(mode), r.offset() - 4);
    }
    cfg.head.update_mode = mode == 0 ? UpdateMode::sum : UpdateMode::replace;
    cfg.head.ln_eps = r.get<double>("ln_eps");
    const auto nstruct = r.get<std::uint32_t>("structure length");
    cfg.head.structure.clear();
    for (std::uint32_t i = 0; i < nstruct; ++i) {
        cfg.head.structure.push_back(static_cast<int>(r.get<std::uint32_t>("structure")));
    }
    const auto nlambda = r.get<std::uint32_t>("lambda count");
    cfg.head.lambdas.clear();
    for (std::uint32_t i = 0; i < nlambda; ++i) {
        cfg.head.lambdas.push_back(r.get<double>("lambda"));
    }
    auto model = std::make_unique<Model<T>>(cfg, 0);
    auto params = model->params();
    const auto count = r.get<std::uint32_t>("parameter count");
    if (count != params.size()) {
        throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                              std::to_string(params.size()),
                          r.offset() - 4);
    }
    for (Param<T>* p : params) {
        const std::size_t start = r.offset();
        const auto name_len = r.get<std::uint16_t>("name length");
        std::string name(name_len, '\0');
        r.get_bytes(name.data(), name_len, "name");
        if (name != p->name) {
            throw FormatError("expected tensor '" + p->name + "', found '" + name + "'", start);
        }
        const auto rank = r.get<std::uint32_t>("rank");
        Shape shape;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape.push_back(static_cast<int>(r.get<std::uint32_t>("extent")));
        }
        if (shape != p->value.shape()) {
            throw FormatError("tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                                  shape_string(p->value.shape()),
                              start);
        }
        for (auto& v : p->value.data()) {
            v = static_cast<T>(r.get<float>("tensor payload"));
        }
    }
    if (!r.at_end()) {
        throw FormatError("trailing bytes after checkpoint", r.offset());
    }
    return model;
}

void save_checkpoint(Model<float>& model, const std::string& path) {
    detail::write_file(path, serialize_checkpoint(model));
}

template <typename T>
std::unique_ptr<Model<T>> load_checkpoint(const std::string& path) {
    return deserialize_checkpoint<T>(detail::read_file(path));
}

template std::vector<std::uint8_t> serialize_checkpoint<float>(Model<float>&);
template std::vector<std::uint8_t> serialize_checkpoint<double>(Model<double>&);
template std::unique_ptr<Model<float>> deserialize_checkpoint<float>(const std::vector<std::uint8_t>&);
template std::unique_ptr<Model<double>> deserialize_checkpoint<double>(const std::vector<std::uint8_t>&);
template std::unique_ptr<Model<float>> load_checkpoint<float>(const std::string&);
template std::unique_ptr<Model<double>> load_checkpoint<double>(const std::string&);

} // namespace sadlr
