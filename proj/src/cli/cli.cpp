#include "pm/cli/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pm/annf/annf.hpp"
#include "pm/annf/diagnostics.hpp"
#include "pm/annf/nnf_io.hpp"
#include "pm/core/io.hpp"
#include "pm/gpm/gnnf.hpp"
#include "pm/gpm/knn.hpp"
#include "pm/patchweb/web.hpp"
#include "pm/search_ops/enrichment.hpp"
#include "pm/synthesis/tools.hpp"
#include "pm/vision/denoise.hpp"
#include "pm/vision/detect.hpp"
#include "pm/vision/forgery.hpp"
#include "pm/vision/lattice.hpp"

namespace pm {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

const std::map<std::string, ColorSpace> kSpaces{
    {"lab", ColorSpace::Lab}, {"rgb", ColorSpace::SRGB}, {"linear", ColorSpace::LinearRGB}};

std::string space_name(ColorSpace s) {
    for (const auto& [name, v] : kSpaces)
        if (v == s) return name;
    return "lab";
}

const std::map<std::string, ReshuffleInit> kInits{
    {"swap", ReshuffleInit::Swap}, {"interpolate", ReshuffleInit::Interpolate}, {"clone", ReshuffleInit::Clone}};

const std::map<std::string, EnrichmentSchedule> kEnrich{{"none", EnrichmentSchedule::None},
                                                        {"inverse", EnrichmentSchedule::Inverse},
                                                        {"forward", EnrichmentSchedule::Forward},
                                                        {"inverse-forward", EnrichmentSchedule::InverseThenForward}};

template <class Map>
std::vector<std::string> keys(const Map& m) {
    std::vector<std::string> k;
    for (const auto& kv : m) k.push_back(kv.first);
    return k;
}

// Every option value lives here so CLI11 can bind to it before parsing. Each
// member starts from its module default.
struct Config {
    std::string report = "text";
    std::string bench_report = "json";
    std::string a, b, third, output;
    std::vector<std::string> inputs;
    int patch = PatchGeometry::kDefaultSize;

    SearchParams search;
    bool multiscale = false;
    bool oracle = false;

    KnnParams knn;
    std::string enrich = "none";

    GnnfParams gnnf;
    std::string filter = "bilinear";

    DenoiseParams denoise;
    ForgeryParams forgery;
    LatticeParams lattice;
    DetectParams detect;
    TransformRange detect_range;

    EmSchedule schedule;
    std::string space = space_name(EmSchedule{}.space);
    int width = 0, height = 0;
    std::string annotations, hole, labels;
    std::vector<int> region, offset;
    std::string init = "swap";

    std::string dir;
    WebBuildOptions web_build;
    WebQueryOptions web_query;

    int bins = 32;
    std::vector<double> band;
    ImprovementHistogramOptions improvement;
};

void add_report(CLI::App* s, std::string& report) {
    s->add_option("--report", report, "Report format on stdout")->check(CLI::IsMember({"text", "json"}));
}

void add_search(CLI::App* s, SearchParams& p) {
    s->add_option("--iterations", p.iterations, "Sweeps over the field");
    s->add_option("--alpha", p.alpha, "Random-search radius ratio");
    s->add_option("--radius", p.w, "Initial random-search radius in pixels (0 means the target's larger side)");
    s->add_option("--early-stop", p.early_stop, "Abandon patch distances that exceed the current best");
    s->add_option("--threads", p.threads, "Strip-parallel worker count");
    s->add_option("--seed", p.seed, "Random seed");
}

void add_range(CLI::App* s, TransformRange& r) {
    s->add_option("--theta-min", r.theta_min, "Smallest rotation in radians");
    s->add_option("--theta-max", r.theta_max, "Largest rotation in radians");
    s->add_option("--scale-min", r.scale_min, "Smallest scale ratio");
    s->add_option("--scale-max", r.scale_max, "Largest scale ratio");
}

void add_schedule(CLI::App* s, Config& c) {
    EmSchedule& e = c.schedule;
    s->add_option("--patch", e.patch, "Patch side in pixels (odd)");
    s->add_option("--pyramid-factor", e.pyramid_factor, "Scale between pyramid levels");
    s->add_option("--min-dim", e.min_dim, "Smallest side of the coarsest level");
    s->add_option("--coarse-iterations", e.coarse_iterations, "EM iterations at the coarsest level");
    s->add_option("--fine-iterations", e.fine_iterations, "Floor on EM iterations at finer levels");
    s->add_option("--search-iterations", e.search_iterations, "Field sweeps per EM iteration");
    s->add_option("--gradual-step", e.gradual_step, "Per-step size ratio for gradual resizing");
    s->add_option("--step-iterations", e.step_iterations, "EM iterations after each gradual step");
    s->add_option("--radius-one-levels", e.radius_one_levels, "Finest levels searched with radius 1 only");
    s->add_option("--space", c.space, "Color space used for matching")->check(CLI::IsMember(keys(kSpaces)));
    s->add_option("--ransac-iterations", e.ransac.iterations, "RANSAC hypotheses per model fit");
    s->add_option("--ransac-threshold", e.ransac.inlier_threshold, "RANSAC inlier distance in pixels");
    s->add_option("--ransac-min-inliers", e.ransac.min_inlier_fraction, "Smallest inlier fraction for a model fit");
    s->add_option("--threads", e.threads, "Strip-parallel worker count");
    s->add_option("--seed", e.seed, "Random seed");
}

void add_patch(CLI::App* s, int& patch) { s->add_option("--patch", patch, "Patch side in pixels (odd)"); }

json point(Point p) { return json::array({p.x, p.y}); }

ConstraintSet load_constraints(const std::string& path, Extent source, Extent target) {
    ConstraintSet cs;
    if (path.empty()) return cs;
    const auto bytes = read_file(path);
    const Annotations a = parse_annotations(std::string(bytes.begin(), bytes.end()));
    validate_annotations(a, source, target);
    cs.models = a.models;
    cs.hard = a.hard;
    return cs;
}

void write_text(const std::string& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// Subcommand bodies. Each returns the report and writes its artifacts.

json run_nnf(Config& c) {
    const ImageBuffer A = load_image(c.a), B = load_image(c.b);
    NnfRunStats st;
    const auto t0 = Clock::now();
    const Nnf f = compute_nnf(A, B, PatchGeometry(c.patch), c.search, c.multiscale, &st);
    const double wall = seconds_since(t0);
    write_nnf(c.output, f);
    return {{"meanDist", f.mean_distance()}, {"wallTimeSec", wall}, {"peakAuxBytes", st.peak_aux_bytes},
            {"entries", f.size()}, {"output", c.output}};
}

json run_knn(Config& c) {
    const ImageBuffer A = load_image(c.a);
    const bool self = c.b.empty();
    const ImageBuffer B = self ? A : load_image(c.b);
    const EnrichmentSchedule schedule = kEnrich.at(c.enrich);
    if (schedule != EnrichmentSchedule::None && !self)
        throw InvalidArgument("enrichment needs a self-matching field; omit the target image");
    KnnRunStats st;
    const auto t0 = Clock::now();
    const KnnField f = schedule == EnrichmentSchedule::None
                           ? compute_knn(A, B, PatchGeometry(c.patch), c.knn, &st)
                           : compute_knn_enriched(A, PatchGeometry(c.patch), c.knn, schedule, &st);
    const double wall = seconds_since(t0);
    write_knn(c.output, f);
    return {{"meanDist", f.mean_distance()}, {"wallTimeSec", wall}, {"peakAuxBytes", st.peak_aux_bytes},
            {"k", f.k()}, {"output", c.output}};
}

json run_gnnf(Config& c) {
    const ImageBuffer A = load_image(c.a), B = load_image(c.b);
    c.gnnf.filter = c.filter == "nearest" ? SampleFilter::Nearest : SampleFilter::Bilinear;
    const auto t0 = Clock::now();
    const GeneralizedNnf f = compute_gnnf(A, B, PatchGeometry(c.patch), c.gnnf);
    const double wall = seconds_since(t0);
    std::ostringstream tsv;
    tsv << "x\ty\ttx\tty\ttheta\tscale\tdist\n";
    const Rect r = f.source_rect();
    for (std::size_t i = 0; i < r.area(); ++i) {
        const Point z = r.at(i);
        const GnnfEntry& e = f[z];
        tsv << z.x << '\t' << z.y << '\t' << e.target.x << '\t' << e.target.y << '\t' << e.theta << '\t'
            << e.scale << '\t' << e.dist << '\n';
    }
    write_text(c.output, tsv.str());
    return {{"meanDist", f.mean_distance()}, {"wallTimeSec", wall}, {"output", c.output}};
}

json run_denoise(Config& c) {
    const ImageBuffer img = load_image(c.a);
    const auto t0 = Clock::now();
    const ImageBuffer out = nlm_denoise(img, PatchGeometry(c.patch), c.denoise);
    const double wall = seconds_since(t0);
    save_png(c.output, out);
    return {{"wallTimeSec", wall}, {"output", c.output}};
}

json run_forgery(Config& c) {
    const ImageBuffer img = load_image(c.a);
    const auto t0 = Clock::now();
    const auto regions = detect_copy_move(img, PatchGeometry(c.patch), c.forgery);
    const double wall = seconds_since(t0);
    std::vector<std::uint8_t> mask(img.pixel_count(), 0);
    json list = json::array();
    for (const auto& r : regions) {
        for (std::size_t i = 0; i < mask.size(); ++i) mask[i] |= r.mask[i];
        list.push_back({{"area", r.area}, {"offset", point(r.offset)}});
    }
    if (!c.output.empty()) save_mask_png(c.output, mask, img.extent());
    return {{"regions", list}, {"wallTimeSec", wall}};
}

json run_lattice(Config& c) {
    const ImageBuffer img = load_image(c.a);
    const auto t0 = Clock::now();
    const auto res = detect_lattice(img, PatchGeometry(c.patch), c.lattice);
    const double wall = seconds_since(t0);
    json r{{"found", res.has_value()}, {"wallTimeSec", wall}};
    if (res) {
        r["v1"] = res->v1;
        r["v2"] = res->v2;
        r["inlierFraction"] = res->inlier_fraction;
        if (!c.output.empty()) save_mask_png(c.output, res->inlier_mask, img.extent());
    }
    return r;
}

json run_detect(Config& c) {
    const ImageBuffer templ = load_image(c.a), scene = load_image(c.b);
    const auto t0 = Clock::now();
    const auto d = detect_object(templ, scene, PatchGeometry(c.patch), c.detect_range, c.detect);
    const double wall = seconds_since(t0);
    json r{{"found", d.has_value()}, {"wallTimeSec", wall}};
    if (d) {
        r["theta"] = d->transform.theta;
        r["scale"] = d->transform.scale;
        r["tx"] = d->transform.tx;
        r["ty"] = d->transform.ty;
        r["confidence"] = d->confidence;
    }
    return r;
}

EmSchedule schedule_of(Config& c) {
    EmSchedule s = c.schedule;
    s.space = kSpaces.at(c.space);
    return s;
}

json run_retarget(Config& c) {
    const ImageBuffer S = load_image(c.a);
    const Extent target{c.width, c.height};
    const ConstraintSet cs = load_constraints(c.annotations, S.extent(), target);
    const auto t0 = Clock::now();
    const ImageBuffer out = retarget(S, target, cs, schedule_of(c));
    const double wall = seconds_since(t0);
    save_png(c.output, out);
    return {{"width", out.width()}, {"height", out.height()}, {"wallTimeSec", wall}, {"output", c.output}};
}

json run_complete(Config& c) {
    const ImageBuffer S = load_image(c.a);
    const auto hole = load_mask(c.hole, S.extent());
    const std::vector<int> labels = c.labels.empty() ? std::vector<int>{} : load_labels(c.labels, S.extent());
    const auto t0 = Clock::now();
    const ImageBuffer out = complete(S, hole, labels, schedule_of(c));
    const double wall = seconds_since(t0);
    save_png(c.output, out);
    return {{"wallTimeSec", wall}, {"output", c.output}};
}

json run_reshuffle(Config& c) {
    const ImageBuffer S = load_image(c.a);
    const Rect region{c.region[0], c.region[1], c.region[2], c.region[3]};
    const Point offset{c.offset[0], c.offset[1]};
    const ConstraintSet cs = load_constraints(c.annotations, S.extent(), S.extent());
    const auto t0 = Clock::now();
    const ImageBuffer out = reshuffle(S, region, offset, kInits.at(c.init), cs, schedule_of(c));
    const double wall = seconds_since(t0);
    save_png(c.output, out);
    return {{"wallTimeSec", wall}, {"output", c.output}};
}

json run_web_build(Config& c) {
    std::vector<std::filesystem::path> paths(c.inputs.begin(), c.inputs.end());
    const Manifest manifest = make_manifest(paths);
    json rounds = json::array();
    c.web_build.on_round = [&](int round, double seconds) { rounds.push_back({{"round", round}, {"seconds", seconds}}); };
    const auto t0 = Clock::now();
    build_web(c.dir, manifest, c.web_build);
    const double wall = seconds_since(t0);
    return {{"images", manifest.size()}, {"meanDist", web_mean_distance(c.dir, manifest)}, {"wallTimeSec", wall},
            {"rounds", rounds}};
}

json run_web_query(Config& c) {
    const ImageBuffer q = load_image(c.a);
    const auto t0 = Clock::now();
    const WebNnf f = query_web(c.dir, q, c.web_query);
    const double wall = seconds_since(t0);
    write_file(c.output, encode_web_nnf(f));
    return {{"meanDist", f.mean_distance()}, {"assigned", f.assigned_count()}, {"entries", f.size()},
            {"wallTimeSec", wall}, {"output", c.output}};
}

json run_bench(Config& c) {
    const ImageBuffer A = load_image(c.a), B = load_image(c.b);
    const PatchGeometry geom(c.patch);
    NnfRunStats st;
    const auto t0 = Clock::now();
    const Nnf f = compute_nnf(A, B, geom, c.search, c.multiscale, &st);
    const double wall = seconds_since(t0);
    json r{{"schema", 1},
           {"meanDist", f.mean_distance()},
           {"wallTimeSec", wall},
           {"peakAuxBytes", st.peak_aux_bytes},
           {"pixels", A.pixel_count()},
           {"meanDistPerSweep", st.mean_distance_per_sweep}};
    if (c.oracle) {
        const auto t1 = Clock::now();
        const Nnf exact = brute_force_nnf(A, B, geom, c.search.threads);
        r["exactWallTimeSec"] = seconds_since(t1);
        r["exactMeanDist"] = exact.mean_distance();
    }
    if (!c.output.empty()) write_text(c.output, r.dump(2) + "\n");
    return r;
}

json run_stats(Config& c) {
    const ImageBuffer A = load_image(c.a), B = load_image(c.b);
    const Nnf f = read_nnf(c.third, B.extent());
    if (f.source_extent() != A.extent()) throw InputError("field does not match the source image dimensions");
    const Histogram h = coherence_histogram(f, c.bins);
    json r{{"meanDist", f.mean_distance()}, {"coherence", h.counts}};
    if (!c.band.empty()) {
        const Histogram2D g = improvement_histogram(A, B, f, {c.band[0], c.band[1]}, c.improvement);
        r["improvement"] = {{"side", g.side}, {"cell", g.cell}, {"halfExtent", g.half_extent},
                            {"total", g.total()}, {"counts", g.counts}};
    }
    return r;
}

void print_text(std::ostream& out, const json& r) {
    for (const auto& [key, value] : r.items()) {
        out << key << ": ";
        if (value.is_string())
            out << value.get<std::string>();
        else
            out << value.dump();
        out << '\n';
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Config c;
    CLI::App app{"Dense patch correspondence and patch-based image editing", "pm"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_version_flag("--version", "pm 1.0");

    std::function<json(Config&)> action;
    std::string command;
    auto sub = [&](const std::string& name, const std::string& help, json (*fn)(Config&)) {
        CLI::App* s = app.add_subcommand(name, help);
        s->callback([&, fn, name] {
            action = fn;
            command = name;
        });
        return s;
    };

    {
        CLI::App* s = sub("nnf", "Nearest-neighbor field between two images", run_nnf);
        s->add_option("source", c.a, "Source image (A)")->required();
        s->add_option("target", c.b, "Target image (B)")->required();
        s->add_option("-o,--output", c.output, "Field file to write")->required();
        add_patch(s, c.patch);
        add_search(s, c.search);
        s->add_flag("--multiscale", c.multiscale, "Coarse-to-fine search over image pyramids [off]");
        add_report(s, c.report);
    }
    {
        CLI::App* s = sub("knn", "k nearest-neighbor field (self-matching when the target is omitted)", run_knn);
        s->add_option("source", c.a, "Source image (A)")->required();
        s->add_option("target", c.b, "Target image (B)")->default_str("none");
        s->add_option("-o,--output", c.output, "Field file to write")->required();
        add_patch(s, c.patch);
        s->add_option("--k", c.knn.k, "Neighbors kept per coordinate");
        s->add_option("--samples-per-neighbor", c.knn.samples_per_neighbor,
                      "Random-search sequences around each stored neighbor");
        add_search(s, c.knn.search);
        s->add_option("--enrich", c.enrich, "Enrichment after each sweep")->check(CLI::IsMember(keys(kEnrich)));
        add_report(s, c.report);
    }
    {
        CLI::App* s = sub("gnnf", "Rotation and scale field between two images (tab-separated output)", run_gnnf);
        s->add_option("source", c.a, "Source image (A)")->required();
        s->add_option("target", c.b, "Target image (B)")->required();
        s->add_option("-o,--output", c.output, "Table file to write")->required();
        add_patch(s, c.patch);
        add_search(s, c.gnnf.search);
        add_range(s, c.gnnf.range);
        s->add_option("--filter", c.filter, "Target sampling filter")->check(CLI::IsMember({"bilinear", "nearest"}));
        s->add_option("--standardize", c.gnnf.standardize, "Compare mean and contrast normalized patches");
        add_report(s, c.report);
    }
    {
        CLI::App* s = sub("denoise", "Non-local means over k nearest patches", run_denoise);
        s->add_option("input", c.a, "Noisy image")->required();
        s->add_option("-o,--output", c.output, "Denoised PNG to write")->required();
        add_patch(s, c.patch);
        s->add_option("--k", c.denoise.k, "Similar patches averaged per pixel");
        s->add_option("--bandwidth", c.denoise.h, "Filtering bandwidth on per-sample SSD");
        s->add_option("--include-self", c.denoise.include_self, "Average the pixel's own patch as well");
        add_search(s, c.denoise.search);
        add_report(s, c.report);
    }
    {
        CLI::App* s = sub("forgery", "Copy-move forgery detection", run_forgery);
        s->add_option("input", c.a, "Image to inspect")->required();
        s->add_option("-o,--output", c.output, "Mask PNG of detected regions")->default_str("none");
        add_patch(s, c.patch);
        s->add_option("--k", c.forgery.k, "Neighbors per patch");
        s->add_option("--offset-agreement", c.forgery.offset_agreement, "Offset tolerance between adjacent patches");
        s->add_option("--max-patch-dist", c.forgery.max_patch_dist, "Largest per-sample SSD counted as a copy");
        s->add_option("--min-region", c.forgery.min_region, "Smallest reported region in pixels");
        s->add_option("--exclusion", c.forgery.self_exclusion_radius,
                      "Self-match exclusion radius (0 means the patch size)");
        add_search(s, c.forgery.search);
        add_report(s, c.report);
    }
    {
        CLI::App* s = sub("lattice", "Translational lattice symmetry detection", run_lattice);
        s->add_option("input", c.a, "Image to inspect")->required();
        s->add_option("-o,--output", c.output, "Mask PNG of lattice inliers")->default_str("none");
        add_patch(s, c.patch);
        s->add_option("--k", c.lattice.k, "Neighbors per patch");
        s->add_option("--ransac-iterations", c.lattice.ransac_iterations, "Basis hypotheses");
        s->add_option("--inlier-threshold", c.lattice.inlier_threshold, "Inlier distance in pixels");
        s->add_option("--min-inlier-fraction", c.lattice.min_inlier_fraction, "Smallest accepted inlier fraction");
        s->add_option("--max-coefficient", c.lattice.max_coefficient, "Largest integer lattice coefficient");
        add_search(s, c.lattice.search);
        add_report(s, c.report);
    }
    {
        CLI::App* s = sub("detect", "Template detection under rotation and scale", run_detect);
        s->add_option("template", c.a, "Template image")->required();
        s->add_option("scene", c.b, "Scene image")->required();
        add_patch(s, c.patch);
        add_range(s, c.detect_range);
        s->add_option("--ransac-iterations", c.detect.ransac_iterations, "Similarity hypotheses");
        s->add_option("--inlier-threshold", c.detect.inlier_threshold, "Inlier distance in pixels");
        s->add_option("--min-confidence", c.detect.min_confidence, "Smallest inlier fraction reported as found");
        add_search(s, c.detect.search);
        add_report(s, c.report);
    }
    {
        CLI::App* s = sub("retarget", "Resize by bidirectional-similarity synthesis", run_retarget);
        s->add_option("input", c.a, "Source image")->required();
        s->add_option("-o,--output", c.output, "Result PNG")->required();
        s->add_option("--width", c.width, "Output width")->required();
        s->add_option("--height", c.height, "Output height")->required();
        s->add_option("--annotations", c.annotations, "Constraint annotation file")->default_str("none");
        add_schedule(s, c);
        add_report(s, c.report);
    }
    {
        CLI::App* s = sub("complete", "Fill a hole from the rest of the image", run_complete);
        s->add_option("input", c.a, "Source image")->required();
        s->add_option("-o,--output", c.output, "Result PNG")->required();
        s->add_option("--hole", c.hole, "Hole mask PNG (nonzero = fill)")->required();
        s->add_option("--labels", c.labels, "Label PNG restricting which source areas may fill which hole areas")
            ->default_str("none");
        add_schedule(s, c);
        add_report(s, c.report);
    }
    {
        CLI::App* s = sub("reshuffle", "Move a region and resynthesize its surroundings", run_reshuffle);
        s->add_option("input", c.a, "Source image")->required();
        s->add_option("-o,--output", c.output, "Result PNG")->required();
        s->add_option("--region", c.region, "Region x0 y0 x1 y1")->expected(4)->required();
        s->add_option("--offset", c.offset, "Displacement dx dy")->expected(2)->required();
        s->add_option("--init", c.init, "Fill of the vacated area")->check(CLI::IsMember(keys(kInits)));
        s->add_option("--annotations", c.annotations, "Constraint annotation file")->default_str("none");
        add_schedule(s, c);
        add_report(s, c.report);
    }
    {
        CLI::App* s = sub("web-build", "Build or extend a PatchWeb over an image collection", run_web_build);
        s->add_option("--dir", c.dir, "Web directory")->required();
        s->add_option("images", c.inputs, "Collection images")->required();
        s->add_option("--patch", c.web_build.patch, "Patch side in pixels (odd)");
        s->add_option("--capacity", c.web_build.capacity, "Images resident per working set");
        s->add_option("--rounds", c.web_build.rounds, "Relaxation rounds");
        s->add_option("--sweeps", c.web_build.relax.sweeps, "Sweeps per working set");
        s->add_option("--alpha", c.web_build.relax.alpha, "Random-search radius ratio");
        s->add_option("--seed", c.web_build.relax.seed, "Random seed");
        add_report(s, c.report);
    }
    {
        CLI::App* s = sub("web-query", "Match a new image against a built PatchWeb", run_web_query);
        s->add_option("--dir", c.dir, "Web directory")->required();
        s->add_option("query", c.a, "Query image")->required();
        s->add_option("-o,--output", c.output, "Field file to write")->required();
        s->add_option("--capacity", c.web_query.capacity, "Images resident per working set");
        s->add_option("--rounds", c.web_query.rounds, "Relaxation rounds");
        s->add_option("--workers", c.web_query.workers, "Independent query workers");
        s->add_option("--sweeps", c.web_query.relax.sweeps, "Sweeps per working set");
        s->add_option("--alpha", c.web_query.relax.alpha, "Random-search radius ratio");
        s->add_option("--seed", c.web_query.relax.seed, "Random seed");
        add_report(s, c.report);
    }
    {
        CLI::App* s = sub("bench", "Time a field computation, optionally against the exact scan", run_bench);
        s->add_option("source", c.a, "Source image (A)")->required();
        s->add_option("target", c.b, "Target image (B)")->required();
        s->add_option("-o,--output", c.output, "Also write the report to this file")->default_str("none");
        add_patch(s, c.patch);
        add_search(s, c.search);
        s->add_flag("--multiscale", c.multiscale, "Coarse-to-fine search over image pyramids [off]");
        s->add_flag("--oracle", c.oracle, "Also run the exact scan and report its mean distance [off]");
        add_report(s, c.bench_report);
    }
    {
        CLI::App* s = sub("stats", "Coherence and improvement histograms of a stored field", run_stats);
        s->add_option("source", c.a, "Source image (A)")->required();
        s->add_option("target", c.b, "Target image (B)")->required();
        s->add_option("field", c.third, "Field file written by nnf")->required();
        s->add_option("--bins", c.bins, "Coherence histogram bins");
        s->add_option("--band", c.band, "Distance band low high for the improvement histogram")->expected(2);
        s->add_option("--half-extent", c.improvement.half_extent, "Improvement histogram half extent in pixels");
        s->add_option("--cell", c.improvement.cell, "Improvement histogram cell size in pixels");
        s->add_option("--stride", c.improvement.stride, "Source coordinate stride");
        add_report(s, c.report);
    }

    std::vector<std::string> argv_store{"pm"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : argv_store) argv.push_back(s.c_str());
    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        json report = action(c);
        report["command"] = command;
        if ((command == "bench" ? c.bench_report : c.report) == "json")
            out << report.dump(2) << '\n';
        else
            print_text(out, report);
        return kExitOk;
    } catch (const InputError& e) {
        err << "pm " << command << ": " << e.what() << '\n';
        return kExitInput;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "pm " << command << ": " << e.what() << '\n';
        return kExitInput;
    } catch (const InvalidArgument& e) {
        err << "pm " << command << ": " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "pm " << command << ": " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace pm
