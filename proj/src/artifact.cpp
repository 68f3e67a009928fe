#include "parkcast/artifact.hpp"

#include "parkcast/error.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace parkcast {

namespace {

constexpr char kMagic[8] = {'P', 'K', 'C', 'A', 'S', 'T', '\0', '\1'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
public:
    template <typename T>
    void put(T value)
    {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const char*>(&value);
        out_.append(p, sizeof(T));
    }
    void put_doubles(const double* data, std::size_t n) { out_.append(reinterpret_cast<const char*>(data), n * sizeof(double)); }
    void put_bytes(std::string_view s) { out_.append(s); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get()
    {
        T value;
        need(sizeof(T));
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    void get_doubles(double* data, std::size_t n)
    {
        if (n > (bytes_.size() - pos_) / sizeof(double))
            truncated();
        std::memcpy(data, bytes_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
    }
    std::string_view get_bytes(std::size_t n)
    {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n)
    {
        if (n > bytes_.size() - pos_)
            truncated();
    }
    [[noreturn]] static void truncated() { fail(ErrorCode::CorruptArtifact, "artifact is truncated"); }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

std::string encode_mlp(const MlpModel& m)
{
    Writer w;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.params.widths.size()));
    for (int width : m.params.widths)
        w.put<std::int32_t>(width);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(m.params.hidden));
    for (std::size_t l = 0; l < m.params.weights.size(); ++l) {
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m.params.weights[l];
        w.put_doubles(rm.data(), static_cast<std::size_t>(rm.size()));
        w.put_doubles(m.params.biases[l].data(), static_cast<std::size_t>(m.params.biases[l].size()));
    }
    w.put_doubles(m.target_offset.data(), m.target_offset.size());
    w.put<double>(m.target_scale);
    return w.take();
}

MlpModel decode_mlp(Reader& r)
{
    const auto layers = r.get<std::uint32_t>();
    if (layers < 2 || layers > 64)
        fail(ErrorCode::CorruptArtifact, "implausible layer count");
    std::vector<int> widths;
    for (std::uint32_t i = 0; i < layers; ++i) {
        const auto w = r.get<std::int32_t>();
        if (w < 1 || w > 1 << 20)
            fail(ErrorCode::CorruptArtifact, "implausible layer width");
        widths.push_back(w);
    }
    const auto act = r.get<std::uint8_t>();
    if (act > static_cast<std::uint8_t>(Activation::sigmoid))
        fail(ErrorCode::CorruptArtifact, "unknown activation tag");
    MlpModel m;
    m.params = MlpParams::zeros(widths, static_cast<Activation>(act));
    for (std::size_t l = 0; l < m.params.weights.size(); ++l) {
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(m.params.weights[l].rows(),
                                                                                 m.params.weights[l].cols());
        r.get_doubles(rm.data(), static_cast<std::size_t>(rm.size()));
        m.params.weights[l] = rm;
        r.get_doubles(m.params.biases[l].data(), static_cast<std::size_t>(m.params.biases[l].size()));
    }
    m.target_offset.resize(m.params.output_width());
    r.get_doubles(m.target_offset.data(), m.target_offset.size());
    m.target_scale = r.get<double>();
    return m;
}

std::string encode_forest(const Forest& f)
{
    Writer w;
    w.put<std::uint64_t>(f.outputs());
    w.put<std::uint64_t>(f.trees().size());
    for (const auto& t : f.trees()) {
        w.put<std::uint64_t>(t.nodes().size());
        for (const auto& n : t.nodes()) {
            w.put<std::int32_t>(n.feature);
            w.put<double>(n.threshold);
            w.put<std::int32_t>(n.left);
            w.put<std::int32_t>(n.right);
            w.put<std::int32_t>(n.leaf);
        }
        w.put<std::uint64_t>(t.leaf_values().size());
        w.put_doubles(t.leaf_values().data(), t.leaf_values().size());
    }
    return w.take();
}

Forest decode_forest(Reader& r, std::size_t input_width)
{
    const auto outputs = r.get<std::uint64_t>();
    const auto n_trees = r.get<std::uint64_t>();
    if (outputs == 0 || n_trees == 0 || n_trees > 1'000'000)
        fail(ErrorCode::CorruptArtifact, "implausible forest shape");
    std::vector<RegressionTree> trees;
    for (std::uint64_t i = 0; i < n_trees; ++i) {
        const auto n_nodes = r.get<std::uint64_t>();
        if (n_nodes == 0 || n_nodes > (1ull << 32))
            fail(ErrorCode::CorruptArtifact, "implausible node count");
        std::vector<RegressionTree::Node> nodes(n_nodes);
        for (auto& n : nodes) {
            n.feature = r.get<std::int32_t>();
            n.threshold = r.get<double>();
            n.left = r.get<std::int32_t>();
            n.right = r.get<std::int32_t>();
            n.leaf = r.get<std::int32_t>();
        }
        const auto n_values = r.get<std::uint64_t>();
        if (n_values % outputs != 0 || n_values > (1ull << 36))
            fail(ErrorCode::CorruptArtifact, "leaf table size is not a multiple of the output width");
        std::vector<double> values(n_values);
        r.get_doubles(values.data(), values.size());
        const auto leaves = static_cast<std::int64_t>(n_values / outputs);
        for (const auto& n : nodes) {
            const bool internal_ok = n.feature >= 0 && static_cast<std::size_t>(n.feature) < input_width && n.left > 0 &&
                                     n.right > 0 && static_cast<std::uint64_t>(n.left) < n_nodes &&
                                     static_cast<std::uint64_t>(n.right) < n_nodes;
            const bool leaf_ok = n.feature == -1 && n.leaf >= 0 && n.leaf < leaves;
            if (!internal_ok && !leaf_ok)
                fail(ErrorCode::CorruptArtifact, "tree node references out of range");
        }
        trees.emplace_back(std::move(nodes), std::move(values), outputs);
    }
    return Forest(std::move(trees), outputs);
}

}  // namespace

std::string_view to_string(ModelKind k) noexcept { return k == ModelKind::mlp ? "ffnn" : "rf"; }

ModelKind parse_model_kind(std::string_view name)
{
    if (name == "ffnn" || name == "mlp")
        return ModelKind::mlp;
    if (name == "rf" || name == "forest")
        return ModelKind::forest;
    fail(ErrorCode::InvalidConfig, "unknown model kind '" + std::string(name) + "' (expected ffnn or rf)");
}

std::vector<double> ModelArtifact::predict(const FeatureVector& x) const
{
    if (x.schema_digest != schema.digest())
        fail(ErrorCode::DigestMismatch, "feature vector schema does not match the model schema");
    if (x.values.size() != schema.width())
        fail(ErrorCode::ShapeMismatch, "feature vector width does not match the model schema");
    if (kind == ModelKind::mlp)
        return std::get<MlpModel>(model).predict(x.values);
    return std::get<Forest>(model).predict(x.values);
}

Matrix ModelArtifact::predict_batch(const SupervisedSet& set) const
{
    if (set.schema_digest != schema.digest())
        fail(ErrorCode::SchemaMismatch, "supervised set schema does not match the model schema");
    if (kind == ModelKind::mlp)
        return std::get<MlpModel>(model).predict_batch(set.X);
    return std::get<Forest>(model).predict_batch(set.X);
}

std::string ModelArtifact::digest() const { return sha256_hex(serialize_artifact(*this)); }

std::string serialize_artifact(const ModelArtifact& a)
{
    const std::string payload =
        a.kind == ModelKind::mlp ? encode_mlp(std::get<MlpModel>(a.model)) : encode_forest(std::get<Forest>(a.model));
    const nlohmann::json header = {
        {"kind", to_string(a.kind)},
        {"target", to_string(a.target)},
        {"horizons", a.horizons.minutes},
        {"schema", a.schema.to_json()},
        {"schema_digest", a.schema.digest()},
        {"metadata", a.metadata},
        {"payload_sha256", sha256_hex(payload)},
    };
    const std::string header_text = header.dump();
    Writer w;
    w.put_bytes(std::string_view(kMagic, sizeof kMagic));
    w.put<std::uint32_t>(kFormatVersion);
    w.put<std::uint64_t>(header_text.size());
    w.put_bytes(header_text);
    w.put<std::uint64_t>(payload.size());
    w.put_bytes(payload);
    return w.take();
}

ModelArtifact deserialize_artifact(std::string_view bytes)
{
    Reader r(bytes);
    if (r.get_bytes(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic))
        fail(ErrorCode::CorruptArtifact, "not a model artifact");
    if (r.get<std::uint32_t>() != kFormatVersion)
        fail(ErrorCode::CorruptArtifact, "unsupported artifact version");
    const auto header_len = r.get<std::uint64_t>();
    const auto header_text = r.get_bytes(header_len);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::CorruptArtifact, std::string("artifact header is not valid JSON: ") + e.what());
    }
    const auto payload_len = r.get<std::uint64_t>();
    const auto payload = r.get_bytes(payload_len);
    if (!r.done())
        fail(ErrorCode::CorruptArtifact, "trailing bytes after payload");

    ModelArtifact a;
    try {
        a.kind = parse_model_kind(header.at("kind").get<std::string>());
        const auto target = parse_target(header.at("target").get<std::string>());
        if (!target)
            fail(ErrorCode::CorruptArtifact, "unknown target in artifact");
        a.target = *target;
        a.horizons.minutes = header.at("horizons").get<std::vector<int>>();
        a.schema = FeatureSchema::from_json(header.at("schema"));
        a.metadata = header.at("metadata");
        if (header.at("payload_sha256").get<std::string>() != sha256_hex(payload))
            fail(ErrorCode::CorruptArtifact, "payload checksum mismatch");
        if (header.at("schema_digest").get<std::string>() != a.schema.digest())
            fail(ErrorCode::DigestMismatch, "stored schema digest does not match the embedded schema");
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::CorruptArtifact, std::string("artifact header is incomplete: ") + e.what());
    }

    Reader pr(payload);
    if (a.kind == ModelKind::mlp) {
        MlpModel m = decode_mlp(pr);
        if (m.params.input_width() != a.schema.width() || m.params.output_width() != a.horizons.size())
            fail(ErrorCode::CorruptArtifact, "network shape does not match schema and horizons");
        a.model = std::move(m);
    } else {
        Forest f = decode_forest(pr, a.schema.width());
        if (f.outputs() != a.horizons.size())
            fail(ErrorCode::CorruptArtifact, "forest output width does not match horizons");
        a.model = std::move(f);
    }
    if (!pr.done())
        fail(ErrorCode::CorruptArtifact, "trailing bytes in payload");
    return a;
}

void save_artifact(const ModelArtifact& artifact, const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorCode::IoError, "cannot write " + path.string());
    const auto bytes = serialize_artifact(artifact);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        fail(ErrorCode::IoError, "failed writing " + path.string());
}

ModelArtifact load_artifact(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCode::FileUnreadable, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_artifact(ss.str());
}

}  // namespace parkcast
