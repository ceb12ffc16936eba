#include "lhsr/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "lhsr/params_io.hpp"

namespace lhsr {

std::string DatasetManifest::to_json() const {
    nlohmann::json j;
    j["patch_size"] = patchSize;
    j["effective_patch_size"] = effectivePatchSize;
    j["stride"] = stride;
    j["scale"] = scale;
    j["blur_sigma"] = blurSigma;
    j["blur_radius"] = blurRadius;
    j["seed"] = seed;
    j["base_count"] = baseCount;
    j["total_count"] = totalCount;
    nlohmann::json src = nlohmann::json::array();
    for (const auto& [name, count] : perSource)
        src.push_back({{"name", name}, {"count", count}});
    j["sources"] = src;
    return j.dump(2) + "\n";
}

std::vector<std::pair<Plane, std::pair<int, int>>> extract_patches(const Plane& image,
                                                                   int size, int stride) {
    if (size < 1 || stride < 1)
        throw std::invalid_argument("extract_patches: size and stride must be >= 1");
    std::vector<std::pair<Plane, std::pair<int, int>>> out;
    if (image.rows() < size || image.cols() < size) return out;
    for (int r = 0; r + size <= image.rows(); r += stride)
        for (int c = 0; c + size <= image.cols(); c += stride)
            out.emplace_back(image.block(r, c, size, size), std::make_pair(r, c));
    return out;
}

Plane make_boundary_map(const Plane& hr, const std::optional<Plane>& annotation) {
    if (annotation) {
        if (annotation->rows() != hr.rows() || annotation->cols() != hr.cols())
            throw std::invalid_argument(
                "make_boundary_map: annotation " + std::to_string(annotation->rows()) + "x" +
                std::to_string(annotation->cols()) + " misaligned with hr " +
                std::to_string(hr.rows()) + "x" + std::to_string(hr.cols()));
        return clamp01(*annotation);
    }
    Plane mag = sobel_gradients(hr).magnitude;
    const double peak = mag.maxCoeff();
    if (peak > 0.0) mag /= peak;
    return clamp01(mag);
}

namespace {

constexpr char kDatasetMagic[8] = {'L', 'H', 'S', 'R', 'D', 'S', '1', '\n'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& o, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) o.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& o, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) o.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& o, double v) {
    std::uint64_t b;
    std::memcpy(&b, &v, 8);
    put_u64(o, b);
}
void put_plane(std::string& o, const Plane& p) {
    for (Eigen::Index r = 0; r < p.rows(); ++r)
        for (Eigen::Index c = 0; c < p.cols(); ++c) put_f64(o, p(r, c));
}

struct Cursor {
    const std::string& buf;
    std::size_t pos = 0;
    std::string where;
    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error(where + ": truncated dataset");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= std::uint32_t(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= std::uint64_t(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() {
        const std::uint64_t b = u64();
        double v;
        std::memcpy(&v, &b, 8);
        return v;
    }
    Plane plane(int h, int w) {
        Plane p(h, w);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) p(r, c) = f64();
        return p;
    }
};

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(dir))
        for (const auto& e : std::filesystem::directory_iterator(dir)) {
            const auto ext = e.path().extension().string();
            if (ext == ".png" || ext == ".pgm") files.push_back(e.path());
        }
    std::sort(files.begin(), files.end());
    return files;
}

} // namespace

DatasetManifest build_dataset(const std::filesystem::path& corpusDir,
                              const std::filesystem::path& outPath,
                              DatasetManifest m) {
    const auto hrFiles = list_images(corpusDir / "hr");
    if (hrFiles.empty())
        throw std::runtime_error("build_dataset: no images under " +
                                 (corpusDir / "hr").string());
    if (m.scale < 2 || m.scale > 4)
        throw std::invalid_argument("build_dataset: scale must be in {2,3,4}");
    m.effectivePatchSize = m.patchSize - m.patchSize % m.scale;
    if (m.effectivePatchSize < m.scale)
        throw std::invalid_argument("build_dataset: patch size too small for scale");
    const int ps = m.effectivePatchSize;

    std::string records;
    m.perSource.clear();
    m.baseCount = 0;
    m.totalCount = 0;
    DegradeSpec clean{m.scale, 0.0, 0};
    DegradeSpec blurred{m.scale, m.blurSigma, m.blurRadius};
    for (std::uint32_t src = 0; src < hrFiles.size(); ++src) {
        const Plane hr = crop_to_multiple(load_image(hrFiles[src]).y, m.scale);
        std::optional<Plane> annotation;
        for (const char* ext : {".png", ".pgm"}) {
            const auto p = corpusDir / "boundary" / (hrFiles[src].stem().string() + ext);
            if (std::filesystem::exists(p)) {
                annotation = load_image(p).y;
                break;
            }
        }
        const Plane boundary = make_boundary_map(hr, annotation);
        std::uint64_t count = 0;
        for (const auto& [patch, off] : extract_patches(hr, ps, m.stride)) {
            const Plane bpatch = boundary.block(off.first, off.second, ps, ps);
            auto emit = [&](const DegradeSpec& spec) {
                put_u32(records, src);
                put_u32(records, static_cast<std::uint32_t>(off.first));
                put_u32(records, static_cast<std::uint32_t>(off.second));
                put_plane(records, degrade(patch, spec));
                put_plane(records, patch);
                put_plane(records, bpatch);
                ++count;
            };
            emit(clean);
            ++m.baseCount;
            if (m.blurSigma > 0.0) emit(blurred);
        }
        m.perSource.emplace_back(hrFiles[src].stem().string(), count);
        m.totalCount += count;
    }
    if (m.totalCount == 0)
        throw std::runtime_error("build_dataset: corpus produced zero triplets");

    std::string out(kDatasetMagic, 8);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(m.scale));
    put_u32(out, static_cast<std::uint32_t>(m.patchSize));
    put_u32(out, static_cast<std::uint32_t>(m.effectivePatchSize));
    put_u32(out, static_cast<std::uint32_t>(m.stride));
    put_f64(out, m.blurSigma);
    put_u32(out, static_cast<std::uint32_t>(m.blurRadius));
    put_u64(out, m.seed);
    put_u64(out, m.baseCount);
    put_u64(out, m.totalCount);
    put_u32(out, static_cast<std::uint32_t>(m.perSource.size()));
    for (const auto& [name, count] : m.perSource) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_u64(out, count);
    }
    out += records;
    write_file_atomic(outPath, out);
    write_file_atomic(outPath.string() + ".manifest.json", m.to_json());
    return m;
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dataset " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    const std::string buf = os.str();
    Cursor c{buf, 0, path.string()};
    c.need(8);
    if (std::memcmp(buf.data(), kDatasetMagic, 8) != 0)
        throw std::runtime_error(path.string() + ": not a dataset container");
    c.pos += 8;
    if (c.u32() != kVersion) throw std::runtime_error(path.string() + ": unsupported version");

    Dataset ds;
    DatasetManifest& m = ds.manifest;
    m.scale = static_cast<int>(c.u32());
    m.patchSize = static_cast<int>(c.u32());
    m.effectivePatchSize = static_cast<int>(c.u32());
    m.stride = static_cast<int>(c.u32());
    m.blurSigma = c.f64();
    m.blurRadius = static_cast<int>(c.u32());
    m.seed = c.u64();
    m.baseCount = c.u64();
    m.totalCount = c.u64();
    const std::uint32_t nsrc = c.u32();
    for (std::uint32_t i = 0; i < nsrc; ++i) {
        const std::uint32_t len = c.u32();
        c.need(len);
        std::string name = buf.substr(c.pos, len);
        c.pos += len;
        m.perSource.emplace_back(std::move(name), c.u64());
    }
    const int ps = m.effectivePatchSize, ls = ps / m.scale;
    ds.triplets.reserve(m.totalCount);
    for (std::uint64_t i = 0; i < m.totalCount; ++i) {
        TrainingTriplet t;
        t.sourceId = c.u32();
        t.offsetRow = static_cast<int>(c.u32());
        t.offsetCol = static_cast<int>(c.u32());
        t.lr = c.plane(ls, ls);
        t.hr = c.plane(ps, ps);
        t.boundary = c.plane(ps, ps);
        ds.triplets.push_back(std::move(t));
    }
    return ds;
}

BatchStream::BatchStream(const Dataset& dataset, int batchSize, std::uint64_t seed)
    : dataset_(dataset), batchSize_(batchSize), seed_(seed) {
    if (batchSize < 1) throw std::invalid_argument("BatchStream: batchSize < 1");
    if (dataset.triplets.empty()) throw std::invalid_argument("BatchStream: empty dataset");
    reshuffle();
}

void BatchStream::reshuffle() {
    order_.resize(dataset_.triplets.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    std::mt19937_64 rng(seed_ + 0x9e3779b97f4a7c15ULL * (epoch_ + 1));
    std::shuffle(order_.begin(), order_.end(), rng);
    cursor_ = 0;
}

std::vector<const TrainingTriplet*> BatchStream::next() {
    if (cursor_ >= order_.size()) {
        ++epoch_;
        reshuffle();
    }
    std::vector<const TrainingTriplet*> batch;
    while (cursor_ < order_.size() && static_cast<int>(batch.size()) < batchSize_)
        batch.push_back(&dataset_.triplets[order_[cursor_++]]);
    return batch;
}

} // namespace lhsr
