#include "lhsr/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lhsr {

namespace {

void check_pair(const Plane& a, const Plane& b, int borderCrop, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": dimension mismatch " +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()));
    if (borderCrop < 0 || 2 * borderCrop >= a.rows() || 2 * borderCrop >= a.cols())
        throw std::invalid_argument(std::string(op) + ": border crop leaves no pixels");
}

} // namespace

double psnr(const Plane& a, const Plane& b, int borderCrop) {
    check_pair(a, b, borderCrop, "psnr");
    const Eigen::Index h = a.rows() - 2 * borderCrop, w = a.cols() - 2 * borderCrop;
    const double mse =
        (a.block(borderCrop, borderCrop, h, w) - b.block(borderCrop, borderCrop, h, w))
            .square()
            .sum() /
        static_cast<double>(h * w);
    if (mse <= 0.0) return kPsnrSentinelDb;
    return std::min(kPsnrSentinelDb, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

// Separable valid-mode Gaussian filter.
Plane gauss_valid(const Plane& src, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    Plane tmp(src.rows() - n + 1, src.cols());
    for (Eigen::Index r = 0; r < tmp.rows(); ++r)
        for (Eigen::Index c = 0; c < tmp.cols(); ++c) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[i] * src(r + i, c);
            tmp(r, c) = acc;
        }
    Plane out(tmp.rows(), tmp.cols() - n + 1);
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (Eigen::Index c = 0; c < out.cols(); ++c) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[i] * tmp(r, c + i);
            out(r, c) = acc;
        }
    return out;
}

} // namespace

double ssim(const Plane& a, const Plane& b, int borderCrop) {
    check_pair(a, b, borderCrop, "ssim");
    const Eigen::Index h = a.rows() - 2 * borderCrop, w = a.cols() - 2 * borderCrop;
    if (h < kSsimWindow || w < kSsimWindow)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    const Plane x = a.block(borderCrop, borderCrop, h, w);
    const Plane y = b.block(borderCrop, borderCrop, h, w);

    std::vector<double> k(kSsimWindow);
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - (kSsimWindow - 1) / 2.0;
        k[i] = std::exp(-0.5 * d * d / (kSsimSigma * kSsimSigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;

    const Plane mx = gauss_valid(x, k);
    const Plane my = gauss_valid(y, k);
    const Plane mxx = gauss_valid(x * x, k);
    const Plane myy = gauss_valid(y * y, k);
    const Plane mxy = gauss_valid(x * y, k);

    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // (K*L)^2, L = 1
    double acc = 0.0;
    for (Eigen::Index r = 0; r < mx.rows(); ++r)
        for (Eigen::Index c = 0; c < mx.cols(); ++c) {
            const double ux = mx(r, c), uy = my(r, c);
            const double vx = mxx(r, c) - ux * ux;
            const double vy = myy(r, c) - uy * uy;
            const double cov = mxy(r, c) - ux * uy;
            acc += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) /
                   ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
    return acc / static_cast<double>(mx.rows() * mx.cols());
}

void EvalReport::recompute_aggregates() {
    meanPsnr = 0.0;
    meanSsim = 0.0;
    if (records.empty()) return;
    for (const auto& r : records) {
        meanPsnr += r.psnrDb;
        meanSsim += r.ssim;
    }
    meanPsnr /= static_cast<double>(records.size());
    meanSsim /= static_cast<double>(records.size());
}

EvalReport evaluate_method(const std::filesystem::path& testDir,
                           const Upscaler& upscaler, const std::string& methodName,
                           int scale, const EvalOptions& opts) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(testDir))
        for (const auto& e : std::filesystem::directory_iterator(testDir)) {
            const auto ext = e.path().extension().string();
            if (ext == ".png" || ext == ".pgm") files.push_back(e.path());
        }
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw std::runtime_error("evaluate_method: no images in " + testDir.string());

    const int crop = opts.borderCrop >= 0 ? opts.borderCrop : scale;
    EvalReport report;
    report.records.resize(files.size());
    auto eval_one = [&](std::size_t i) {
        const auto& f = files[i];
        const Plane hr = crop_to_multiple(load_image(f).y, scale);
        DegradeSpec spec;
        spec.scale = scale;
        spec.blurSigma = opts.blurSigma;
        const Plane lr = degrade(hr, spec);
        Plane up = upscaler(lr);
        if (up.rows() != hr.rows() || up.cols() != hr.cols())
            throw std::runtime_error("evaluate_method: upscaler returned " +
                                     std::to_string(up.rows()) + "x" +
                                     std::to_string(up.cols()) + " for " + f.string());
        if (opts.quantize) up = quantize_plane(clamp01(up));
        EvalRecord& rec = report.records[i];
        rec.name = f.stem().string();
        rec.scale = scale;
        rec.method = methodName;
        rec.psnrDb = psnr(up, hr, crop);
        rec.ssim = ssim(up, hr, crop);
    };
    const int threads = std::clamp<int>(opts.threads, 1, static_cast<int>(files.size()));
    if (threads == 1) {
        for (std::size_t i = 0; i < files.size(); ++i) eval_one(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> nextIdx{0};
        std::mutex errMutex;
        std::string firstError;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = nextIdx.fetch_add(1);
                    if (i >= files.size()) return;
                    try {
                        eval_one(i);
                    } catch (const std::exception& e) {
                        std::scoped_lock lock(errMutex);
                        if (firstError.empty()) firstError = e.what();
                    }
                }
            });
        for (auto& th : pool) th.join();
        if (!firstError.empty()) throw std::runtime_error(firstError);
    }
    report.recompute_aggregates();
    return report;
}

std::string report_to_csv(const EvalReport& report) {
    std::ostringstream os;
    os << "name,scale,method,psnr_db,ssim\n";
    os << std::setprecision(17);
    for (const auto& r : report.records)
        os << r.name << ',' << r.scale << ',' << r.method << ',' << r.psnrDb << ','
           << r.ssim << '\n';
    return os.str();
}

EvalReport report_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != "name,scale,method,psnr_db,ssim")
        throw std::runtime_error("report_from_csv: bad header");
    EvalReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        EvalRecord r;
        std::string field;
        std::getline(ls, r.name, ',');
        std::getline(ls, field, ',');
        r.scale = std::stoi(field);
        std::getline(ls, r.method, ',');
        std::getline(ls, field, ',');
        r.psnrDb = std::stod(field);
        std::getline(ls, field, ',');
        r.ssim = std::stod(field);
        report.records.push_back(std::move(r));
    }
    report.recompute_aggregates();
    return report;
}

std::string report_table(const std::vector<EvalReport>& reports) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "Method" << std::setw(8) << "Scale"
       << std::setw(10) << "PSNR" << std::setw(10) << "SSIM" << '\n';
    os << std::string(44, '-') << '\n';
    for (const auto& rep : reports) {
        if (rep.records.empty()) continue;
        os << std::left << std::setw(16) << rep.records.front().method << std::setw(8)
           << rep.records.front().scale << std::fixed << std::setprecision(2)
           << std::setw(10) << rep.meanPsnr << std::setprecision(4) << std::setw(10)
           << rep.meanSsim << '\n';
        os.unsetf(std::ios::fixed);
        os << std::setprecision(6);
    }
    return os.str();
}

} // namespace lhsr
