#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "lhsr/dataset.hpp"
#include "lhsr/hsp.hpp"
#include "lhsr/image.hpp"
#include "lhsr/lsp.hpp"
#include "lhsr/metrics.hpp"
#include "lhsr/params_io.hpp"
#include "lhsr/train.hpp"

namespace {

using namespace lhsr;

int env_threads() {
    if (const char* v = std::getenv("LHSR_THREADS")) {
        const int n = std::atoi(v);
        if (n >= 1) return n;
    }
    return 1;
}

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

struct PrepareArgs {
    std::string corpus, out;
    DatasetManifest manifest;
};

int cmd_prepare(const PrepareArgs& a) {
    const DatasetManifest m = build_dataset(a.corpus, a.out, a.manifest);
    std::cout << m.to_json();
    std::cout << "wrote " << a.out << " (" << m.totalCount << " triplets)\n";
    return 0;
}

struct TrainArgs {
    std::string dataset, out, logPath, resumePath, valDataset, initKernelPath;
    TrainConfig cfg;
    std::string initMode = "identity";
    std::string identityKernel = "bilinear";
    bool toy = false;
};

int cmd_train(const TrainArgs& a) {
    Dataset ds = load_dataset(a.dataset);
    if (a.toy && ds.triplets.size() > 1000) ds.triplets.resize(1000);
    TrainConfig cfg = a.cfg;
    cfg.scale = ds.manifest.scale;
    cfg.init = a.initMode == "random" ? InitMode::Random : InitMode::InterpolationIdentity;
    cfg.identityInitBicubic = a.identityKernel == "bicubic";

    std::optional<Dataset> val;
    std::vector<const TrainingTriplet*> valSet;
    if (!a.valDataset.empty()) {
        val = load_dataset(a.valDataset);
        for (const auto& t : val->triplets) valSet.push_back(&t);
    }

    std::optional<Checkpoint> resume;
    if (!a.resumePath.empty()) resume = load_checkpoint(a.resumePath);

    TrainResult res;
    if (!a.initKernelPath.empty() && !resume) {
        // Seed the interpolation kernel from a previously fitted one.
        int kscale = 0;
        ConvSpec k = load_kernel(a.initKernelPath, &kscale);
        if (kscale != cfg.scale)
            throw std::runtime_error("--init-kernel scale " + std::to_string(kscale) +
                                     " != dataset scale " + std::to_string(cfg.scale));
        cfg.deconvKernel = k.kernel.h();
        auto [lsp, hsp] = init_params(cfg, cfg.init);
        lsp.deconv = std::move(k);
        lsp.deconv.stride = cfg.scale;
        lsp.deconv.transposed = true;
        Checkpoint start;
        start.iteration = 0;
        start.lsp = std::move(lsp);
        start.hsp = std::move(hsp);
        res = train(ds, cfg, valSet.empty() ? nullptr : &valSet, &start);
    } else {
        res = train(ds, cfg, valSet.empty() ? nullptr : &valSet,
                    resume ? &*resume : nullptr);
    }

    save_params(a.out, res.lsp, res.hsp);
    const std::string logPath = a.logPath.empty() ? a.out + ".log.csv" : a.logPath;
    write_file_atomic(logPath, res.log.to_csv());
    std::cout << "trained " << res.log.entries.size() << " iterations, final loss "
              << (res.log.entries.empty() ? 0.0 : res.log.entries.back().loss) << "\n"
              << "params: " << a.out << "\nlog: " << logPath << "\n";
    return 0;
}

struct SrArgs {
    std::string model, input, output, boundaryOut, baseline, fixedKernel;
    int scale = 0;
    double lambda = -1.0;
};

int cmd_sr(const SrArgs& a) {
    const LoadedImage img = load_image(a.input);
    Plane y;
    int scale = a.scale;

    if (!a.baseline.empty()) {
        if (scale == 0) throw std::runtime_error("--baseline requires --scale");
        const ResampleMethod m =
            a.baseline == "bilinear" ? ResampleMethod::Bilinear : ResampleMethod::Bicubic;
        y = clamp01(classical_upscale(img.y, scale, m));
    } else if (!a.fixedKernel.empty()) {
        int kscale = 0;
        ConvSpec k = load_kernel(a.fixedKernel, &kscale);
        if (scale == 0) scale = kscale;
        LspParams p;
        p.scale = scale;
        p.useConv1 = false;
        p.conv1 = ConvSpec{Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0, false};
        p.proj = ConvSpec{Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0, false};
        p.deconv = std::move(k);
        p.deconv.stride = scale;
        p.deconv.transposed = true;
        DisplacementField zero{Plane::Zero(img.y.rows(), img.y.cols()),
                               Plane::Zero(img.y.rows(), img.y.cols()), 0.0};
        y = clamp01(tensor_to_plane(lsp_forward(img.y, p, zero, 1e-8).hLsp));
    } else {
        if (a.model.empty()) throw std::runtime_error("need --model, --baseline or --fixed-kernel");
        auto [lsp, hsp] = load_params(a.model);
        if (scale == 0) scale = lsp.scale;
        LspConfig cfg;
        cfg.scale = scale;
        cfg.useConv1 = lsp.useConv1;
        if (a.lambda >= 0.0) cfg.lambda = a.lambda;
        cfg.deconvKernel = lsp.deconv.kernel.h();
        PredictResult pr = predict(img.y, lsp, hsp, cfg, !a.boundaryOut.empty());
        y = pr.y;
        if (pr.boundary) save_image_gray(a.boundaryOut, *pr.boundary);
    }

    if (img.cb && img.cr) {
        // Chrominance goes up bicubically; only luminance is super-resolved.
        const Plane cb = clamp01(classical_upscale(*img.cb, scale, ResampleMethod::Bicubic));
        const Plane cr = clamp01(classical_upscale(*img.cr, scale, ResampleMethod::Bicubic));
        save_image_color(a.output, y, cb, cr);
    } else {
        save_image_gray(a.output, y);
    }
    std::cout << "wrote " << a.output << " (" << y.cols() << "x" << y.rows() << ")\n";
    return 0;
}

struct EvalArgs {
    std::string method = "bicubic";
    std::string set, dataDir = "data", model, kernel, csvOut;
    int scale = 2;
    int borderCrop = -1;
    bool noQuantize = false;
    double blurSigma = 0.0;
};

int cmd_eval(const EvalArgs& a) {
    std::filesystem::path dir = a.set;
    if (!std::filesystem::is_directory(dir)) dir = std::filesystem::path(a.dataDir) / a.set;
    if (!std::filesystem::is_directory(dir))
        throw std::runtime_error("test set not found: " + a.set);

    EvalOptions opts;
    opts.borderCrop = a.borderCrop;
    opts.quantize = !a.noQuantize;
    opts.blurSigma = a.blurSigma;
    opts.threads = env_threads();

    Upscaler up;
    const int scale = a.scale;
    std::optional<std::pair<LspParams, HspParams>> model;
    std::optional<ConvSpec> kernel;
    if (a.method == "bicubic")
        up = [scale](const Plane& lr) {
            return classical_upscale(lr, scale, ResampleMethod::Bicubic);
        };
    else if (a.method == "bilinear")
        up = [scale](const Plane& lr) {
            return classical_upscale(lr, scale, ResampleMethod::Bilinear);
        };
    else if (a.method == "oracle")
        up = [scale](const Plane& lr) {
            // Perfect-reconstruction reference: metrics must saturate.
            return classical_upscale(lr, scale, ResampleMethod::Bicubic);
        };
    else if (a.method == "model") {
        if (a.model.empty()) throw std::runtime_error("--method model requires --model");
        model = load_params(a.model);
        if (model->first.scale != scale)
            throw std::runtime_error("model scale " + std::to_string(model->first.scale) +
                                     " != requested scale " + std::to_string(scale));
        LspConfig cfg;
        cfg.scale = scale;
        cfg.useConv1 = model->first.useConv1;
        cfg.deconvKernel = model->first.deconv.kernel.h();
        up = [scale, cfg, &model](const Plane& lr) {
            return predict(lr, model->first, model->second, cfg).y;
        };
    } else if (a.method == "fixed-kernel") {
        if (a.kernel.empty()) throw std::runtime_error("--method fixed-kernel requires --kernel");
        kernel = load_kernel(a.kernel);
        up = [scale, &kernel](const Plane& lr) {
            LspParams p;
            p.scale = scale;
            p.useConv1 = false;
            p.conv1 = ConvSpec{Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0, false};
            p.proj = ConvSpec{Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0, false};
            p.deconv = *kernel;
            p.deconv.stride = scale;
            p.deconv.transposed = true;
            DisplacementField zero{Plane::Zero(lr.rows(), lr.cols()),
                                   Plane::Zero(lr.rows(), lr.cols()), 0.0};
            return tensor_to_plane(lsp_forward(lr, p, zero, 1e-8).hLsp);
        };
    } else
        throw std::runtime_error("unknown method: " + a.method);

    EvalReport report;
    if (a.method == "oracle") {
        // Bypass the degrade step entirely: compare HR with itself.
        report.records.clear();
        for (const auto& f : list_images(dir)) {
            const Plane hr = crop_to_multiple(load_image(f).y, scale);
            EvalRecord rec{f.stem().string(), scale, "oracle", 0.0, 0.0};
            const int crop = opts.borderCrop >= 0 ? opts.borderCrop : scale;
            rec.psnrDb = psnr(hr, hr, crop);
            rec.ssim = ssim(hr, hr, crop);
            report.records.push_back(rec);
        }
        if (report.records.empty()) throw std::runtime_error("empty test set: " + dir.string());
        report.recompute_aggregates();
    } else {
        report = evaluate_method(dir, up, a.method, scale, opts);
    }

    if (!a.csvOut.empty()) write_file_atomic(a.csvOut, report_to_csv(report));
    std::cout << report_table({report});
    return 0;
}

struct KernelFitArgs {
    std::string corpus, out;
    int scale = 2;
    KernelFitOptions opts;
    int maxImages = 12;
    int cropSize = 96;
};

int cmd_kernelfit(const KernelFitArgs& a) {
    std::vector<std::pair<Plane, Plane>> corpus;
    auto files = list_images(a.corpus);
    if (files.empty()) files = list_images(std::filesystem::path(a.corpus) / "hr");
    if (files.empty()) throw std::runtime_error("no corpus images under " + a.corpus);
    if (static_cast<int>(files.size()) > a.maxImages) files.resize(a.maxImages);
    for (const auto& f : files) {
        Plane hr = crop_to_multiple(load_image(f).y, a.scale);
        if (a.cropSize > 0 && hr.rows() > a.cropSize && hr.cols() > a.cropSize) {
            const Eigen::Index r0 = (hr.rows() - a.cropSize) / 2;
            const Eigen::Index c0 = (hr.cols() - a.cropSize) / 2;
            hr = crop_to_multiple(hr.block(r0, c0, a.cropSize, a.cropSize).eval(), a.scale);
        }
        DegradeSpec spec;
        spec.scale = a.scale;
        corpus.emplace_back(degrade(hr, spec), hr);
    }
    const KernelFitResult res = fit_interpolation_kernel(corpus, a.scale, a.opts);
    save_kernel(a.out, res.kernel, a.scale);
    std::cout << "kernel-fit report (corpus of " << corpus.size() << " images, x"
              << a.scale << ")\n"
              << "  bicubic PSNR: " << res.bicubicPsnr << " dB\n"
              << "  learned PSNR: " << res.learnedPsnr << " dB\n"
              << "  kernel: " << a.out << "\n";
    return 0;
}

struct AblateArgs {
    std::string dataset, outPrefix, valDataset;
    TrainConfig cfg;
    bool toy = false;
};

int cmd_ablate(const AblateArgs& a) {
    Dataset ds = load_dataset(a.dataset);
    if (a.toy && ds.triplets.size() > 1000) ds.triplets.resize(1000);
    TrainConfig cfg = a.cfg;
    cfg.scale = ds.manifest.scale;
    std::optional<Dataset> val;
    std::vector<const TrainingTriplet*> valSet;
    if (!a.valDataset.empty()) {
        val = load_dataset(a.valDataset);
        for (const auto& t : val->triplets) valSet.push_back(&t);
    }
    auto [with, without] = ablate_hsp(ds, cfg, valSet.empty() ? nullptr : &valSet);
    write_file_atomic(a.outPrefix + ".with_hsp.csv", with.log.to_csv());
    write_file_atomic(a.outPrefix + ".without_hsp.csv", without.log.to_csv());
    const double lw = with.log.entries.back().loss;
    const double lo = without.log.entries.back().loss;
    std::cout << "final loss with HSP objective: " << lw << "\n"
              << "final loss without:            " << lo << "\n"
              << "curves: " << a.outPrefix << ".with_hsp.csv / .without_hsp.csv\n";
    return 0;
}

void add_train_flags(CLI::App* c, TrainConfig& cfg) {
    c->add_option("--iters", cfg.maxIterations, "SGD iterations");
    c->add_option("--batch", cfg.batchSize, "batch size");
    c->add_option("--lr", cfg.learningRate, "learning rate; 0 runs the range test");
    c->add_option("--alpha", cfg.alpha, "boundary-task weight");
    c->add_option("--lambda", cfg.lambda, "pixel-placement strength");
    c->add_option("--max-disp", cfg.maxDisp, "displacement bound in HR cells");
    c->add_option("--smooth-sigma", cfg.smoothSigma, "displacement smoothing sigma");
    c->add_option("--feature-maps", cfg.featureMaps, "conv1 feature maps");
    c->add_option("--conv1-kernel", cfg.conv1Kernel, "conv1 kernel size");
    c->add_option("--deconv-kernel", cfg.deconvKernel, "interpolation kernel size");
    c->add_option("--hsp-kernel", cfg.hspKernel, "HSP kernel size");
    c->add_option("--eval-every", cfg.evalEvery, "validation cadence (0 = off)");
    c->add_option("--seed", cfg.seed, "RNG seed");
    c->add_flag("--freeze-boundary", cfg.freezeBoundary, "pin the boundary head at zero");
    c->add_flag("--single-task", cfg.singleTask, "plain MSE objective");
    c->add_flag("--sum-loss", cfg.sumLoss, "sum instead of mean loss reduction");
    c->add_flag_function(
        "--no-conv1", [&cfg](std::int64_t) { cfg.useConv1 = false; },
        "drop the feature conv; place the raw LR plane");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"local/holistic structure preserving super resolution"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key = value config file");
    bool dumpConfig = false;
    app.add_flag("--dump-config", dumpConfig, "print the effective configuration");

    PrepareArgs prep;
    auto* cPrep = app.add_subcommand("prepare", "build a training dataset");
    cPrep->add_option("--corpus", prep.corpus, "corpus dir (hr/ + optional boundary/)")->required();
    cPrep->add_option("--out", prep.out, "output dataset file")->required();
    cPrep->add_option("--scale", prep.manifest.scale, "upscale factor");
    cPrep->add_option("--patch", prep.manifest.patchSize, "HR patch size");
    cPrep->add_option("--stride", prep.manifest.stride, "patch stride");
    cPrep->add_option("--blur-sigma", prep.manifest.blurSigma, "blur augmentation sigma");
    cPrep->add_option("--seed", prep.manifest.seed, "seed recorded in the manifest");

    TrainArgs tr;
    auto* cTrain = app.add_subcommand("train", "train the LSP+HSP model");
    cTrain->add_option("--dataset", tr.dataset, "dataset file from prepare")->required();
    cTrain->add_option("--out", tr.out, "output parameter blob")->required();
    cTrain->add_option("--log", tr.logPath, "training log CSV (default <out>.log.csv)");
    cTrain->add_option("--checkpoint", tr.cfg.checkpointPath, "checkpoint path");
    cTrain->add_option("--checkpoint-every", tr.cfg.checkpointEvery, "checkpoint cadence");
    cTrain->add_option("--resume", tr.resumePath, "resume from checkpoint");
    cTrain->add_option("--val-dataset", tr.valDataset, "validation dataset file");
    cTrain->add_option("--init", tr.initMode, "identity|random")
        ->check(CLI::IsMember({"identity", "random"}));
    cTrain->add_option("--identity-kernel", tr.identityKernel, "bilinear|bicubic")
        ->check(CLI::IsMember({"bilinear", "bicubic"}));
    cTrain->add_option("--init-kernel", tr.initKernelPath, "kernel blob from kernelfit");
    cTrain->add_flag("--toy", tr.toy, "cap the dataset at 1000 triplets");
    add_train_flags(cTrain, tr.cfg);

    SrArgs sr;
    auto* cSr = app.add_subcommand("sr", "super-resolve one image");
    cSr->add_option("--model", sr.model, "parameter blob");
    cSr->add_option("--in", sr.input, "input image")->required();
    cSr->add_option("--out", sr.output, "output image")->required();
    cSr->add_option("--emit-boundary", sr.boundaryOut, "write the boundary head here");
    cSr->add_option("--baseline", sr.baseline, "bicubic|bilinear, bypass the network")
        ->check(CLI::IsMember({"bicubic", "bilinear"}));
    cSr->add_option("--fixed-kernel", sr.fixedKernel, "kernel blob; Shepard interpolation only");
    cSr->add_option("--scale", sr.scale, "upscale factor (required for --baseline)");
    cSr->add_option("--lambda", sr.lambda, "override placement strength");

    EvalArgs ev;
    auto* cEval = app.add_subcommand("eval", "evaluate a method on a test set");
    cEval->add_option("--method", ev.method, "bicubic|bilinear|oracle|model|fixed-kernel")
        ->check(CLI::IsMember({"bicubic", "bilinear", "oracle", "model", "fixed-kernel"}));
    cEval->add_option("--set", ev.set, "test set directory or name under --data-dir")->required();
    cEval->add_option("--data-dir", ev.dataDir, "base directory for named sets");
    cEval->add_option("--model", ev.model, "parameter blob for --method model");
    cEval->add_option("--kernel", ev.kernel, "kernel blob for --method fixed-kernel");
    cEval->add_option("--scale", ev.scale, "upscale factor");
    cEval->add_option("--border-crop", ev.borderCrop, "metric crop (default scale)");
    cEval->add_option("--blur-sigma", ev.blurSigma, "degradation blur sigma");
    cEval->add_flag("--no-quantize", ev.noQuantize, "measure continuous outputs");
    cEval->add_option("--csv", ev.csvOut, "write per-image records here");

    KernelFitArgs kf;
    auto* cKf = app.add_subcommand("kernelfit", "fit a single interpolation kernel");
    cKf->add_option("--corpus", kf.corpus, "directory of HR images")->required();
    cKf->add_option("--out", kf.out, "output kernel blob")->required();
    cKf->add_option("--scale", kf.scale, "upscale factor");
    cKf->add_option("--kernel-size", kf.opts.kernelSize, "kernel size (default 4s+1)");
    cKf->add_option("--iters", kf.opts.iterations, "descent iterations");
    cKf->add_option("--lr", kf.opts.learningRate, "learning rate; 0 runs the range test");
    cKf->add_option("--max-images", kf.maxImages, "corpus image cap");
    cKf->add_option("--crop", kf.cropSize, "center-crop size (0 = full images)");

    AblateArgs ab;
    auto* cAb = app.add_subcommand("ablate", "train with and without the HSP objective");
    cAb->add_option("--dataset", ab.dataset, "dataset file")->required();
    cAb->add_option("--out-prefix", ab.outPrefix, "log file prefix")->required();
    cAb->add_option("--val-dataset", ab.valDataset, "validation dataset file");
    cAb->add_flag("--toy", ab.toy, "cap the dataset at 1000 triplets");
    add_train_flags(cAb, ab.cfg);

    try {
        app.parse(argc, argv);
        if (dumpConfig) {
            std::cout << app.config_to_str(true, false);
            return 0;
        }
        if (*cPrep) return cmd_prepare(prep);
        if (*cTrain) return cmd_train(tr);
        if (*cSr) return cmd_sr(sr);
        if (*cEval) return cmd_eval(ev);
        if (*cKf) return cmd_kernelfit(kf);
        if (*cAb) return cmd_ablate(ab);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
