#include <array>
#include <bit>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "curvepose/curvnet.hpp"
#include "curvepose/dataset.hpp"
#include "curvepose/errors.hpp"
#include "curvepose/features.hpp"
#include "curvepose/pipeline.hpp"
#include "curvepose/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace curvepose;

namespace {

constexpr int kExitNoDetection = 2;
constexpr int kExitNoPose = 3;
constexpr int kExitIo = 4;

std::pair<int, int> parse_size(const std::string& s) {
    int w = 0;
    int h = 0;
    char x = 0;
    std::istringstream in(s);
    if (!(in >> w >> x >> h) || (x != 'x' && x != 'X') || w <= 0 || h <= 0) {
        throw ConfigError("size must look like WIDTHxHEIGHT, got '" + s + "'");
    }
    return {w, h};
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

std::string base64(const unsigned char* data, std::size_t n) {
    static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (std::size_t i = 0; i < n; i += 3) {
        const std::uint32_t b0 = data[i];
        const std::uint32_t b1 = i + 1 < n ? data[i + 1] : 0;
        const std::uint32_t b2 = i + 2 < n ? data[i + 2] : 0;
        const std::uint32_t v = (b0 << 16) | (b1 << 8) | b2;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += i + 1 < n ? kAlphabet[(v >> 6) & 63] : '=';
        out += i + 2 < n ? kAlphabet[v & 63] : '=';
    }
    return out;
}

BBox bbox_from_json(const json& j) {
    const json& b = j.contains("bbox") ? j.at("bbox") : j;
    return {b.at("x").get<double>(), b.at("y").get<double>(), b.at("w").get<double>(), b.at("h").get<double>()};
}

CameraIntrinsics intrinsics_from_json(const json& j) {
    const json& k = j.contains("intrinsics") ? j.at("intrinsics") : j;
    CameraIntrinsics K{k.at("fx").get<double>(), k.at("fy").get<double>(), k.value("s", 0.0),
                       k.at("cx").get<double>(), k.at("cy").get<double>(), k.at("width").get<int>(),
                       k.at("height").get<int>()};
    K.validate();
    return K;
}

// --------------------------------------------------------------------------

struct MakeTargetsArgs {
    fs::path out;
    int count = 20;
    std::uint64_t seed = 0;
    std::string size = "400x300";
};

int cmd_make_targets(const MakeTargetsArgs& a) {
    const auto [w, h] = parse_size(a.size);
    std::vector<TargetImage> targets;
    for (int i = 0; i < a.count; ++i) {
        targets.push_back(make_procedural_target(i, a.seed, w, h));
    }
    save_targets(targets, a.out);
    std::cout << "wrote " << a.count << " targets to " << a.out << '\n';
    return 0;
}

struct GenerateArgs {
    fs::path targets;
    fs::path out;
    fs::path backgrounds;
    int count = 0;
    std::uint64_t seed = 0;
    std::string size = "640x480";
    int supersample = 2;
};

int cmd_generate(const GenerateArgs& a) {
    const auto library = load_targets(a.targets);
    SceneDistribution dist;
    std::tie(dist.width, dist.height) = parse_size(a.size);
    dist.supersample = a.supersample;
    if (!a.backgrounds.empty()) {
        for (const auto& t : load_targets(a.backgrounds)) {
            dist.panoramas.push_back(std::make_shared<const RgbImage>(t.pixels));
        }
        dist.panorama_weight = 0.5;
    }
    DatasetWriter writer(a.out);
    for (int i = 0; i < a.count; ++i) {
        writer.add(render(generate_scene(library, dist, a.seed, static_cast<std::size_t>(i)), library));
    }
    writer.finish();
    std::cout << "wrote " << a.count << " scenes to " << a.out << '\n';
    return 0;
}

struct TrainArgs {
    fs::path dataset;
    fs::path out;
    fs::path history;
    std::string variant = "small";
    std::string loss = "huber";
    double delta = 0.4;
    TrainConfig train;
};

int cmd_train(TrainArgs a) {
    NetConfig cfg = NetConfig::for_variant(parse_variant(a.variant));
    cfg.loss = parse_loss(a.loss);
    cfg.huber_delta = a.delta;
    CurvNet net = build_net(cfg);
    net.initialize(a.train.seed);

    const DatasetReader reader(a.dataset);
    std::vector<CropSample> crops;
    crops.reserve(reader.size());
    for (std::size_t i = 0; i < reader.size(); ++i) {
        crops.push_back(make_crop_sample(reader.load(i), cfg));
    }
    const auto [train_set, val_set] = split_dataset(crops);
    crops.clear();

    const TrainResult result = train(net, train_set, val_set, a.train);
    for (const auto& e : result.history) {
        std::printf("epoch %3d  train_huber %.5f  val_huber %.5f  train_mse %.5f  val_mse %.5f\n", e.epoch,
                    e.train_huber, e.val_huber, e.train_mse, e.val_mse);
    }
    std::printf("best epoch %d\n", result.best_epoch);
    save_model(result.best_net, a.out);
    write_history_csv(result.history, a.history.empty() ? fs::path(a.out.string() + ".history.csv") : a.history);
    return 0;
}

struct RunArgs {
    fs::path image;
    fs::path targets;
    fs::path model;
    fs::path gt_bbox;
    fs::path intrinsics;
    fs::path out;
    fs::path overlay;
    std::optional<double> diameter;
    double ratio = EstimateOptions{}.ratio;
    bool full_image = false;
    std::uint64_t seed = 0;
};

int cmd_run(const RunArgs& a) {
    const RgbImage image = read_png(a.image);
    const TargetLibrary library = TargetLibrary::load(a.targets);
    std::optional<CurvNet> net;
    if (!a.model.empty()) {
        net = load_model(a.model);
    } else if (!a.diameter) {
        throw ConfigError("run: --model or --diameter is required");
    }
    CameraIntrinsics K = CameraIntrinsics::scaled_reference(image.width(), image.height());
    if (!a.intrinsics.empty()) {
        K = intrinsics_from_json(read_json(a.intrinsics));
    }
    std::optional<BBox> gt;
    if (!a.gt_bbox.empty()) {
        gt = bbox_from_json(read_json(a.gt_bbox));
    }

    const Detection det = detect_and_classify(image, library, {}, gt);
    EstimateOptions opt;
    opt.diameter = a.diameter;
    opt.ratio = a.ratio;
    opt.full_image = a.full_image;
    opt.seed = a.seed;
    const PoseResult r = estimate(image, det, library, net ? &*net : nullptr, K, opt);

    const auto& q = r.pose.rotation;
    const Vec3 e = quaternion_to_euler(q);
    const Vec3& t = r.pose.translation;
    json j;
    j["target_id"] = r.target_id;
    j["quaternion"] = {q.w(), q.x(), q.y(), q.z()};
    j["translation"] = {t.x(), t.y(), t.z()};
    j["euler"] = {e.x(), e.y(), e.z()};
    j["diameter"] = r.diameter;
    j["inliers"] = r.inliers;
    j["reprojection_error"] = r.reprojection_error;
    write_json(j, a.out);

    if (!a.overlay.empty()) {
        RgbImage canvas = image;
        draw_overlay(canvas, r.pose, {r.diameter, library.target(r.target_id).aspect(), 1.0}, K, det.bbox);
        write_png(canvas, a.overlay);
    }
    std::cout << j.dump() << '\n';
    return 0;
}

struct EvalArgs {
    fs::path dataset;
    fs::path targets;
    fs::path model;
    fs::path out;
    std::string ablation = "full";
    double ratio = EstimateOptions{}.ratio;
    bool full_image = false;
    std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
    EvalOptions opt;
    opt.ablation = parse_ablation(a.ablation);
    opt.estimate.seed = a.seed;
    opt.estimate.ratio = a.ratio;
    opt.estimate.full_image = a.full_image;
    std::optional<CurvNet> net;
    if (!a.model.empty()) {
        net = load_model(a.model);
    } else if (opt.ablation != Ablation::GtAll) {
        throw ConfigError("eval: --model is required unless --ablation gtall");
    }
    const TargetLibrary library = TargetLibrary::load(a.targets);
    const DatasetReader reader(a.dataset);
    const auto records = evaluate(reader, library, net ? &*net : nullptr, opt);
    write_eval_csv(records, a.out);

    const EvalSummary s = summarize(records);
    std::printf("samples          %zu\n", s.count);
    std::printf("success rate     %.3f\n", s.success_rate);
    auto row = [](const char* name, const ColumnSummary& c) {
        std::printf("%-16s %.4f +/- %.4f  (n=%zu)\n", name, c.mean, c.stddev, c.count);
    };
    row("diameter err", s.diameter_error);
    row("rotation err", s.rotation_error);
    row("translation err", s.translation_error);
    row("iou", s.iou);
    row("time (s)", s.time_seconds);
    return 0;
}

struct InspectArgs {
    fs::path image;
    fs::path out;
};

int cmd_inspect(const InspectArgs& a) {
    const RgbImage image = read_png(a.image);
    const DescriptorSet f = extract_features(to_gray(image));
    json kps = json::array();
    for (std::size_t i = 0; i < f.keypoints.size(); ++i) {
        const Keypoint& k = f.keypoints[i];
        std::array<unsigned char, 128 * 4> bytes{};
        for (std::size_t d = 0; d < 128; ++d) {
            const auto bits = std::bit_cast<std::uint32_t>(f.descriptors[i][d]);
            for (int b = 0; b < 4; ++b) bytes[4 * d + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
        }
        kps.push_back({{"x", k.x},
                       {"y", k.y},
                       {"scale", k.scale},
                       {"orientation", k.orientation},
                       {"response", k.response},
                       {"octave", k.octave},
                       {"descriptor", base64(bytes.data(), bytes.size())}});
    }
    json j;
    j["image"] = a.image.string();
    j["width"] = image.width();
    j["height"] = image.height();
    j["descriptor_encoding"] = "base64 float32 little-endian x128";
    j["skipped"] = f.skipped;
    j["keypoints"] = std::move(kps);
    write_json(j, a.out);
    std::cout << f.keypoints.size() << " keypoints\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pose estimation of labels wrapped on cylinders"};
    app.require_subcommand(1);

    MakeTargetsArgs mt;
    auto* c_mt = app.add_subcommand("make-targets", "Write procedural flat targets");
    c_mt->add_option("--out", mt.out, "Output directory")->required();
    c_mt->add_option("--count", mt.count, "Number of targets");
    c_mt->add_option("--seed", mt.seed, "Texture seed");
    c_mt->add_option("--size", mt.size, "Target size WxH");

    GenerateArgs gen;
    auto* c_gen = app.add_subcommand("generate", "Render a synthetic dataset");
    c_gen->add_option("--targets", gen.targets, "Directory of target PNGs")->required();
    c_gen->add_option("--count", gen.count, "Number of scenes")->required();
    c_gen->add_option("--out", gen.out, "Output dataset directory")->required();
    c_gen->add_option("--seed", gen.seed, "Master seed")->required();
    c_gen->add_option("--size", gen.size, "Image size WxH");
    c_gen->add_option("--backgrounds", gen.backgrounds, "Directory of equirectangular PNGs");
    c_gen->add_option("--supersample", gen.supersample, "Samples per pixel per axis");

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train the curvature regressor");
    c_tr->add_option("--dataset", tr.dataset, "Dataset directory")->required();
    c_tr->add_option("--variant", tr.variant, "small|large");
    c_tr->add_option("--loss", tr.loss, "huber|mse");
    c_tr->add_option("--delta", tr.delta, "Huber delta");
    c_tr->add_option("--out", tr.out, "Model file")->required();
    c_tr->add_option("--history", tr.history, "Per-epoch loss CSV (default MODEL.history.csv)");
    c_tr->add_option("--epochs", tr.train.max_epochs, "Maximum epochs");
    c_tr->add_option("--patience", tr.train.patience, "Early-stopping patience");
    c_tr->add_option("--batch", tr.train.batch_size, "Batch size");
    c_tr->add_option("--lr", tr.train.adam.learning_rate, "Adam learning rate");
    c_tr->add_option("--seed", tr.train.seed, "Initialisation and shuffling seed");

    RunArgs run;
    double run_diameter = 0.0;
    auto* c_run = app.add_subcommand("run", "Estimate the pose in one image");
    c_run->add_option("--image", run.image, "Input PNG")->required();
    c_run->add_option("--targets", run.targets, "Directory of target PNGs")->required();
    c_run->add_option("--model", run.model, "Curvature model");
    auto* o_dia = c_run->add_option("--diameter", run_diameter, "Use this diameter instead of the model");
    c_run->add_option("--gt-bbox", run.gt_bbox, "JSON with a bbox (or a ground-truth sidecar)");
    c_run->add_option("--intrinsics", run.intrinsics, "JSON with intrinsics (or a ground-truth sidecar)");
    c_run->add_option("--out", run.out, "Pose JSON")->required();
    c_run->add_option("--overlay", run.overlay, "PNG with the projected wireframe");
    c_run->add_option("--ratio", run.ratio, "Ratio-test threshold for target-to-crop matching");
    c_run->add_flag("--full-image", run.full_image, "Match against the whole image instead of the crop");
    c_run->add_option("--seed", run.seed, "RANSAC seed");

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Evaluate on a dataset");
    c_ev->add_option("--dataset", ev.dataset, "Dataset directory")->required();
    c_ev->add_option("--targets", ev.targets, "Directory of target PNGs")->required();
    c_ev->add_option("--model", ev.model, "Curvature model");
    c_ev->add_option("--ablation", ev.ablation, "full|gtbbox|gtall");
    c_ev->add_option("--out", ev.out, "Per-sample CSV")->required();
    c_ev->add_option("--ratio", ev.ratio, "Ratio-test threshold for target-to-crop matching");
    c_ev->add_flag("--full-image", ev.full_image, "Match against the whole image instead of the crop");
    c_ev->add_option("--seed", ev.seed, "RANSAC seed");

    InspectArgs in;
    auto* c_in = app.add_subcommand("inspect", "Dump SIFT keypoints of an image");
    c_in->add_option("--image", in.image, "Input PNG")->required();
    c_in->add_option("--out", in.out, "Keypoint JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitIo;
    }

    try {
        if (*c_mt) return cmd_make_targets(mt);
        if (*c_gen) return cmd_generate(gen);
        if (*c_tr) return cmd_train(tr);
        if (*c_run) {
            if (*o_dia) run.diameter = run_diameter;
            return cmd_run(run);
        }
        if (*c_ev) return cmd_eval(ev);
        if (*c_in) return cmd_inspect(in);
    } catch (const NoDetectionError& e) {
        std::cerr << "no detection: " << e.what() << '\n';
        return kExitNoDetection;
    } catch (const NoPoseError& e) {
        std::cerr << "no pose: " << e.what() << '\n';
        return kExitNoPose;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
