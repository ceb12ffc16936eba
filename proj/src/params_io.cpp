#include "lhsr/params_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lhsr {

namespace {

constexpr char kParamsMagic[8] = {'L', 'H', 'S', 'R', 'P', 'B', '1', '\n'};
constexpr char kCheckpointMagic[8] = {'L', 'H', 'S', 'R', 'C', 'K', '1', '\n'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}
void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    std::string where;

    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw std::runtime_error(where + ": truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

void put_tensor(std::string& out, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.flat()) put_f64(out, v);
}

Tensor read_tensor(Reader& r) {
    const std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 4) throw std::runtime_error(r.where + ": bad tensor rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    Tensor t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = r.f64();
    return t;
}

void put_conv(std::string& out, const std::string& name, const ConvSpec& c) {
    put_str(out, name);
    put_u32(out, static_cast<std::uint32_t>(c.stride));
    put_u32(out, static_cast<std::uint32_t>(c.padding));
    put_u32(out, c.transposed ? 1 : 0);
    put_tensor(out, c.kernel);
    put_tensor(out, c.bias);
}

ConvSpec read_conv(Reader& r, const std::string& wantName) {
    const std::string name = r.str();
    if (name != wantName)
        throw std::runtime_error(r.where + ": expected section '" + wantName +
                                 "', found '" + name + "'");
    ConvSpec c;
    c.stride = static_cast<int>(r.u32());
    c.padding = static_cast<int>(r.u32());
    c.transposed = r.u32() != 0;
    c.kernel = read_tensor(r);
    c.bias = read_tensor(r);
    return c;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string encode_params(const LspParams& lsp, const HspParams& hsp) {
    std::string out(kParamsMagic, 8);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(lsp.scale));
    put_u32(out, lsp.useConv1 ? 1 : 0);
    put_u32(out, 4);  // section count
    put_conv(out, "lsp.conv1", lsp.conv1);
    put_conv(out, "lsp.proj", lsp.proj);
    put_conv(out, "lsp.deconv", lsp.deconv);
    put_conv(out, "hsp.conv", hsp.conv);
    return out;
}

std::pair<LspParams, HspParams> decode_params(Reader& r) {
    r.need(8);
    if (std::memcmp(r.buf.data() + r.pos, kParamsMagic, 8) != 0)
        throw std::runtime_error(r.where + ": not a parameter blob");
    r.pos += 8;
    if (r.u32() != kVersion) throw std::runtime_error(r.where + ": unsupported version");
    LspParams lsp;
    lsp.scale = static_cast<int>(r.u32());
    lsp.useConv1 = r.u32() != 0;
    if (r.u32() != 4) throw std::runtime_error(r.where + ": bad section count");
    lsp.conv1 = read_conv(r, "lsp.conv1");
    lsp.proj = read_conv(r, "lsp.proj");
    lsp.deconv = read_conv(r, "lsp.deconv");
    HspParams hsp;
    hsp.conv = read_conv(r, "hsp.conv");
    return {std::move(lsp), std::move(hsp)};
}

} // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            std::filesystem::remove(tmp);
            throw std::runtime_error("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

void save_params(const std::filesystem::path& path, const LspParams& lsp,
                 const HspParams& hsp) {
    write_file_atomic(path, encode_params(lsp, hsp));
}

std::pair<LspParams, HspParams> load_params(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    Reader r{buf, 0, path.string()};
    return decode_params(r);
}

void save_kernel(const std::filesystem::path& path, const ConvSpec& kernel, int scale) {
    std::string out(kParamsMagic, 8);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(scale));
    put_u32(out, 0);
    put_u32(out, 1);
    put_conv(out, "kernel", kernel);
    write_file_atomic(path, out);
}

ConvSpec load_kernel(const std::filesystem::path& path, int* scaleOut) {
    const std::string buf = read_file(path);
    Reader r{buf, 0, path.string()};
    r.need(8);
    if (std::memcmp(buf.data(), kParamsMagic, 8) != 0)
        throw std::runtime_error(path.string() + ": not a parameter blob");
    r.pos += 8;
    if (r.u32() != kVersion) throw std::runtime_error(path.string() + ": unsupported version");
    const int scale = static_cast<int>(r.u32());
    r.u32();  // useConv1 slot, unused
    if (r.u32() != 1) throw std::runtime_error(path.string() + ": expected single section");
    if (scaleOut) *scaleOut = scale;
    return read_conv(r, "kernel");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::string out(kCheckpointMagic, 8);
    put_u32(out, kVersion);
    put_u64(out, ck.iteration);
    put_str(out, ck.rngState);
    put_str(out, ck.configEcho);
    put_str(out, encode_params(ck.lsp, ck.hsp));
    write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    Reader r{buf, 0, path.string()};
    r.need(8);
    if (std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
        throw std::runtime_error(path.string() + ": not a checkpoint");
    r.pos += 8;
    if (r.u32() != kVersion) throw std::runtime_error(path.string() + ": unsupported version");
    Checkpoint ck;
    ck.iteration = r.u64();
    ck.rngState = r.str();
    ck.configEcho = r.str();
    const std::string blob = r.str();
    Reader pr{blob, 0, path.string() + " (embedded params)"};
    auto [lsp, hsp] = decode_params(pr);
    ck.lsp = std::move(lsp);
    ck.hsp = std::move(hsp);
    return ck;
}

} // namespace lhsr
