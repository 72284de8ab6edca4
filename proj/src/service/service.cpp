#include "pm/service/service.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

#include "pm/core/io.hpp"
#include "pm/core/pyramid.hpp"
#include "pm/synthesis/tools.hpp"

namespace pm {

using json = nlohmann::json;

Extent preview_extent(Extent e, int max_dim) {
    const int longest = std::max(e.width, e.height);
    if (longest <= max_dim) return e;
    const double s = double(max_dim) / double(longest);
    return {std::max(1, int(std::lround(e.width * s))), std::max(1, int(std::lround(e.height * s)))};
}

namespace {

struct KindName {
    const char* type;
    const char* kind;
    ModelKind model;
};

constexpr KindName kKinds[] = {
    {"line", "free", ModelKind::FreeLine},
    {"line", "slope", ModelKind::FixedSlopeLine},
    {"line", "pos", ModelKind::FixedPositionLine},
    {"region", "translate", ModelKind::TranslateRegion},
    {"region", "scale", ModelKind::ScaleRegion},
};

}  // namespace

json annotations_to_json(const Annotations& a) {
    json out = json::array();
    for (const ModelConstraint& m : a.models) {
        const auto& k = *std::find_if(std::begin(kKinds), std::end(kKinds),
                                      [&](const KindName& n) { return n.model == m.kind; });
        json r{{"type", k.type}, {"kind", k.kind}, {"x0", m.x0}, {"y0", m.y0}, {"x1", m.x1}, {"y1", m.y1}};
        if (m.kind == ModelKind::FixedPositionLine) {
            r["tx0"] = m.tx0;
            r["ty0"] = m.ty0;
            r["tx1"] = m.tx1;
            r["ty1"] = m.ty1;
        }
        if (m.kind == ModelKind::ScaleRegion) r["scale"] = m.scale;
        out.push_back(r);
    }
    for (const HardRegion& h : a.hard)
        out.push_back({{"type", "region"},
                       {"kind", "move"},
                       {"x0", h.source.x0},
                       {"y0", h.source.y0},
                       {"x1", h.source.x1},
                       {"y1", h.source.y1},
                       {"dx", h.offset.x},
                       {"dy", h.offset.y}});
    return out;
}

Annotations annotations_from_json(const json& j) {
    if (!j.is_array()) throw InputError("annotations must be an array of records");
    Annotations a;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const json& r = j[i];
        const std::string where = "annotation " + std::to_string(i) + ": ";
        try {
            const std::string type = r.at("type").get<std::string>(), kind = r.at("kind").get<std::string>();
            if (type == "region" && kind == "move") {
                a.hard.push_back({{r.at("x0").get<int>(), r.at("y0").get<int>(), r.at("x1").get<int>(),
                                   r.at("y1").get<int>()},
                                  {r.at("dx").get<int>(), r.at("dy").get<int>()}});
                continue;
            }
            const auto k = std::find_if(std::begin(kKinds), std::end(kKinds),
                                        [&](const KindName& n) { return type == n.type && kind == n.kind; });
            if (k == std::end(kKinds)) throw InputError(where + "unknown record " + type + " " + kind);
            ModelConstraint m;
            m.kind = k->model;
            m.x0 = r.at("x0").get<double>();
            m.y0 = r.at("y0").get<double>();
            m.x1 = r.at("x1").get<double>();
            m.y1 = r.at("y1").get<double>();
            if (m.kind == ModelKind::FixedPositionLine) {
                m.tx0 = r.at("tx0").get<double>();
                m.ty0 = r.at("ty0").get<double>();
                m.tx1 = r.at("tx1").get<double>();
                m.ty1 = r.at("ty1").get<double>();
            }
            if (m.kind == ModelKind::ScaleRegion) m.scale = r.at("scale").get<double>();
            a.models.push_back(m);
        } catch (const json::exception& e) {
            throw InputError(where + e.what());
        }
    }
    return a;
}

namespace {

// Request-level failures carry their HTTP status.
struct HttpError : Error {
    int status;
    json body;
    HttpError(int s, const std::string& msg, json extra = json::object())
        : Error(msg), status(s), body(std::move(extra)) {
        body["error"] = msg;
    }
};

struct Cancelled {};

std::vector<std::uint8_t> base64_decode(std::string s) {
    if (const auto comma = s.find(','); s.rfind("data:", 0) == 0 && comma != std::string::npos) s.erase(0, comma + 1);
    std::erase_if(s, [](char c) { return c == '\n' || c == '\r' || c == ' '; });
    if (s.size() % 4 != 0) throw HttpError(400, "malformed base64 data");
    std::vector<std::uint8_t> out(s.size() / 4 * 3);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(s.data()), int(s.size()));
    if (n < 0) throw HttpError(400, "malformed base64 data");
    std::size_t pad = 0;
    if (!s.empty() && s.back() == '=') ++pad;
    if (s.size() > 1 && s[s.size() - 2] == '=') ++pad;
    out.resize(std::size_t(n) - pad);
    return out;
}

ImageBuffer to_rgb(const ImageBuffer& img) {
    if (img.channels() == 3) return img;
    ImageBuffer out(img.width(), img.height(), 3, img.space());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, img.channels() < 3 ? 0 : c);
    return out;
}

enum class JobState { Running, Done, Failed };

const char* state_name(JobState s) {
    switch (s) {
        case JobState::Running: return "running";
        case JobState::Done: return "done";
        case JobState::Failed: return "failed";
    }
    return "failed";
}

struct Job {
    std::string id;
    std::atomic<JobState> state{JobState::Running};
    std::atomic<double> progress{0.0};
    std::mutex m;
    std::string reason;
    std::string result_url;
};

struct Session {
    std::string id;
    ImageBuffer source;
    Extent uploaded;
    std::mutex m;
    std::shared_ptr<Job> current;
    std::map<std::string, std::shared_ptr<Job>> jobs;
};

struct EditRequest {
    std::string tool;
    std::vector<std::uint8_t> hole;
    std::vector<int> labels;
    ConstraintSet constraints;
    Extent target;
    Rect region;
    Point offset;
    ReshuffleInit init = ReshuffleInit::Swap;
    double factor = 1.0;
    EmSchedule schedule;
};

template <class T>
T param(const json& params, const char* key, T fallback) {
    if (!params.contains(key)) return fallback;
    try {
        return params.at(key).get<T>();
    } catch (const json::exception&) {
        throw HttpError(400, std::string("parameter ") + key + " has the wrong type");
    }
}

template <std::size_t N>
std::array<int, N> int_array(const json& params, const char* key) {
    if (!params.contains(key)) throw HttpError(400, std::string("missing parameter ") + key);
    const json& v = params.at(key);
    if (!v.is_array() || v.size() != N) throw HttpError(400, std::string("parameter ") + key + " needs " +
                                                            std::to_string(N) + " integers");
    std::array<int, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
        if (!v[i].is_number()) throw HttpError(400, std::string("parameter ") + key + " needs integers");
        out[i] = v[i].get<int>();
    }
    return out;
}

EmSchedule schedule_from(const json& params) {
    EmSchedule s;
    s.seed = param<std::uint64_t>(params, "seed", s.seed);
    s.patch = param(params, "patch", s.patch);
    s.min_dim = param(params, "minDim", s.min_dim);
    s.coarse_iterations = param(params, "coarseIterations", s.coarse_iterations);
    s.fine_iterations = param(params, "fineIterations", s.fine_iterations);
    s.search_iterations = param(params, "searchIterations", s.search_iterations);
    s.step_iterations = param(params, "stepIterations", s.step_iterations);
    s.gradual_step = param(params, "gradualStep", s.gradual_step);
    try {
        s.validate();
    } catch (const InvalidArgument& e) {
        throw HttpError(400, e.what());
    }
    return s;
}

// Parses and validates an edit against the session image. Schema problems
// are 400; geometry the tools would reject is 422.
EditRequest parse_edit(const std::string& body, Extent e) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& ex) {
        throw HttpError(400, std::string("request is not valid JSON: ") + ex.what());
    }
    if (!j.is_object()) throw HttpError(400, "request must be a JSON object");
    EditRequest r;
    r.tool = param<std::string>(j, "tool", "");
    if (r.tool != "complete" && r.tool != "retarget" && r.tool != "reshuffle" && r.tool != "localScale")
        throw HttpError(400, "tool must be one of complete, retarget, reshuffle, localScale");
    const json params = j.value("params", json::object());
    const json masks = j.value("masks", json::object());
    if (!params.is_object() || !masks.is_object()) throw HttpError(400, "params and masks must be objects");
    r.schedule = schedule_from(params);

    Annotations ann;
    try {
        if (j.contains("annotations")) ann = annotations_from_json(j.at("annotations"));
    } catch (const InputError& ex) {
        throw HttpError(400, ex.what());
    }

    auto mask_bytes = [&](const char* key) -> std::vector<std::uint8_t> {
        if (!masks.contains(key)) return {};
        if (!masks.at(key).is_string()) throw HttpError(400, std::string("mask ") + key + " must be a base64 PNG");
        return base64_decode(masks.at(key).get<std::string>());
    };

    try {
        r.target = e;
        if (r.tool == "complete") {
            const auto hole = mask_bytes("hole");
            if (hole.empty()) throw HttpError(400, "complete needs masks.hole");
            r.hole = decode_mask(hole, e);
            if (const auto labels = mask_bytes("labels"); !labels.empty()) r.labels = decode_labels(labels, e);
            validate_completion(e, r.hole, r.labels, r.schedule.patch);
        } else if (r.tool == "retarget") {
            r.target = {param(params, "width", 0), param(params, "height", 0)};
            validate_retarget(e, r.target, r.schedule.patch);
        } else if (r.tool == "reshuffle") {
            const auto rg = int_array<4>(params, "region");
            const auto off = int_array<2>(params, "offset");
            r.region = {rg[0], rg[1], rg[2], rg[3]};
            r.offset = {off[0], off[1]};
            const std::string init = param<std::string>(params, "init", "swap");
            if (init == "swap")
                r.init = ReshuffleInit::Swap;
            else if (init == "interpolate")
                r.init = ReshuffleInit::Interpolate;
            else if (init == "clone")
                r.init = ReshuffleInit::Clone;
            else
                throw HttpError(400, "init must be swap, interpolate or clone");
            validate_reshuffle(e, r.region, r.offset);
        } else {
            const auto rg = int_array<4>(params, "region");
            r.region = {rg[0], rg[1], rg[2], rg[3]};
            r.factor = param(params, "factor", 1.0);
            validate_local_scale(e, r.region, r.factor);
        }
        validate_annotations(ann, e, r.target);
    } catch (const ConstraintError& ex) {
        throw HttpError(422, ex.what(), {{"label", ex.label()}});
    } catch (const InvalidArgument& ex) {
        throw HttpError(422, ex.what());
    } catch (const InputError& ex) {
        // Undecodable mask data is a bad request; a decodable mask of the
        // wrong size is bad geometry.
        const std::string what = ex.what();
        throw HttpError(what.find("dimensions") != std::string::npos ? 422 : 400, what);
    }
    r.constraints.models = ann.models;
    r.constraints.hard = ann.hard;
    return r;
}

ImageBuffer run_edit(const ImageBuffer& S, const EditRequest& r, const EmObserver& observer) {
    if (r.tool == "complete") return complete(S, r.hole, r.labels, r.schedule, observer);
    if (r.tool == "retarget") return retarget(S, r.target, r.constraints, r.schedule, observer);
    if (r.tool == "reshuffle") return reshuffle(S, r.region, r.offset, r.init, r.constraints, r.schedule, observer);
    return local_scale(S, r.region, r.factor, r.schedule, observer);
}

}  // namespace

struct EditService::Impl {
    ServiceOptions opts;
    httplib::Server server;

    std::mutex m;
    std::map<std::string, std::shared_ptr<Session>> sessions;
    std::map<std::string, std::shared_ptr<const std::vector<std::uint8_t>>> results;
    std::mt19937_64 ids{std::random_device{}()};

    std::mutex qm;
    std::condition_variable qcv;
    std::deque<std::function<void()>> queue;
    std::atomic<bool> stopping{false};
    std::vector<std::thread> workers;

    explicit Impl(ServiceOptions o) : opts(std::move(o)) {
        if (opts.workers < 1) throw InvalidArgument("the service needs at least one worker");
        if (opts.preview_max_dim < 8) throw InvalidArgument("preview size too small");
        for (int i = 0; i < opts.workers; ++i) workers.emplace_back([this] { work(); });
        routes();
    }

    ~Impl() {
        server.stop();
        {
            std::lock_guard lock(qm);
            stopping = true;
            queue.clear();
        }
        qcv.notify_all();
        for (auto& t : workers) t.join();
    }

    std::string new_id() {
        static constexpr char hex[] = "0123456789abcdef";
        std::uint64_t v;
        {
            std::lock_guard lock(m);
            v = ids();
        }
        std::string s(16, '0');
        for (int i = 15; i >= 0; --i, v >>= 4) s[std::size_t(i)] = hex[v & 15];
        return s;
    }

    void work() {
        for (;;) {
            std::function<void()> task;
            {
                std::unique_lock lock(qm);
                qcv.wait(lock, [&] { return stopping || !queue.empty(); });
                if (stopping) return;
                task = std::move(queue.front());
                queue.pop_front();
            }
            task();
        }
    }

    void enqueue(std::function<void()> task) {
        {
            std::lock_guard lock(qm);
            queue.push_back(std::move(task));
        }
        qcv.notify_one();
    }

    std::shared_ptr<Session> find_session(const std::string& id) {
        std::lock_guard lock(m);
        const auto it = sessions.find(id);
        if (it == sessions.end()) throw HttpError(404, "unknown session " + id);
        return it->second;
    }

    static void reply(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    template <class Fn>
    auto guarded(Fn fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const HttpError& e) {
                reply(res, e.status, e.body);
            } catch (const std::exception& e) {
                reply(res, 500, {{"error", e.what()}});
            }
        };
    }

    void create_session(const httplib::Request& req, httplib::Response& res) {
        std::string bytes = req.body;
        if (req.is_multipart_form_data()) {
            if (!req.has_file("image")) throw HttpError(400, "multipart upload needs an image part");
            bytes = req.get_file_value("image").content;
        }
        if (bytes.size() > opts.max_upload_bytes) throw HttpError(413, "image larger than the upload limit");
        ImageBuffer img;
        try {
            img = decode_image(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
        } catch (const Error& e) {
            throw HttpError(400, e.what());
        }
        auto s = std::make_shared<Session>();
        s->id = new_id();
        s->uploaded = img.extent();
        const Extent pe = preview_extent(img.extent(), opts.preview_max_dim);
        img = to_rgb(img);
        s->source = pe == img.extent() ? img : resize_area(img, pe.width, pe.height);
        {
            std::lock_guard lock(m);
            sessions[s->id] = s;
        }
        res.set_header("Location", "/sessions/" + s->id);
        reply(res, 201, {{"id", s->id}, {"width", pe.width}, {"height", pe.height},
                         {"uploadedWidth", s->uploaded.width}, {"uploadedHeight", s->uploaded.height}});
    }

    void get_session(const httplib::Request& req, httplib::Response& res) {
        const auto s = find_session(req.matches[1]);
        std::lock_guard lock(s->m);
        const bool busy = s->current && s->current->state == JobState::Running;
        json j{{"id", s->id}, {"width", s->source.width()}, {"height", s->source.height()},
               {"state", busy ? "running" : s->current ? state_name(s->current->state) : "idle"}};
        if (s->current) j["jobId"] = s->current->id;
        reply(res, 200, j);
    }

    void submit(const httplib::Request& req, httplib::Response& res) {
        const auto s = find_session(req.matches[1]);
        std::lock_guard lock(s->m);
        if (s->current && s->current->state == JobState::Running)
            throw HttpError(409, "a job is already running for this session", {{"jobId", s->current->id}});
        auto request = std::make_shared<EditRequest>(parse_edit(req.body, s->source.extent()));
        auto job = std::make_shared<Job>();
        job->id = new_id();
        s->current = job;
        s->jobs[job->id] = job;
        enqueue([this, s, job, request] { execute(*s, *job, *request); });
        const std::string url = "/sessions/" + s->id + "/jobs/" + job->id;
        res.set_header("Location", url);
        reply(res, 202, {{"jobId", job->id}, {"statusUrl", url}});
    }

    void execute(const Session& s, Job& job, const EditRequest& r) {
        try {
            const ImageBuffer out = run_edit(s.source, r, [&](const EmIterationInfo& info) {
                if (stopping) throw Cancelled{};
                job.progress = std::min(info.progress, 0.999);
            });
            auto png = std::make_shared<const std::vector<std::uint8_t>>(encode_png(out));
            const std::string token = new_id() + new_id();
            {
                std::lock_guard lock(m);
                results[token] = png;
            }
            {
                std::lock_guard lock(job.m);
                job.result_url = "/results/" + token + ".png";
            }
            job.progress = 1.0;
            job.state = JobState::Done;
        } catch (const Cancelled&) {
            std::lock_guard lock(job.m);
            job.reason = "service shutting down";
            job.state = JobState::Failed;
        } catch (const std::exception& e) {
            std::lock_guard lock(job.m);
            job.reason = e.what();
            job.state = JobState::Failed;
        }
    }

    void poll(const httplib::Request& req, httplib::Response& res) {
        const auto s = find_session(req.matches[1]);
        std::shared_ptr<Job> job;
        {
            std::lock_guard lock(s->m);
            const auto it = s->jobs.find(req.matches[2]);
            if (it == s->jobs.end()) throw HttpError(404, "unknown job " + std::string(req.matches[2]));
            job = it->second;
        }
        const JobState st = job->state;
        json j{{"jobId", job->id}, {"state", state_name(st)}, {"progress", job->progress.load()}};
        std::lock_guard lock(job->m);
        if (st == JobState::Done) j["resultPngUrl"] = job->result_url;
        if (st == JobState::Failed) j["reason"] = job->reason;
        reply(res, 200, j);
    }

    void result(const httplib::Request& req, httplib::Response& res) {
        std::shared_ptr<const std::vector<std::uint8_t>> png;
        {
            std::lock_guard lock(m);
            const auto it = results.find(req.matches[1]);
            if (it == results.end()) throw HttpError(404, "unknown result");
            png = it->second;
        }
        res.status = 200;
        res.set_content(reinterpret_cast<const char*>(png->data()), png->size(), "image/png");
    }

    void routes() {
        server.set_payload_max_length(opts.max_upload_bytes * 2 + (std::size_t(1) << 20));
        server.set_default_headers({{"Access-Control-Allow-Origin", opts.cors_origin},
                                    {"Access-Control-Expose-Headers", "Location"}});
        server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.set_header("Access-Control-Max-Age", "600");
            res.status = 204;
        });
        server.Post("/sessions", guarded([this](const auto& q, auto& r) { create_session(q, r); }));
        server.Get(R"(/sessions/([0-9a-f]+))", guarded([this](const auto& q, auto& r) { get_session(q, r); }));
        server.Post(R"(/sessions/([0-9a-f]+)/edits)", guarded([this](const auto& q, auto& r) { submit(q, r); }));
        server.Get(R"(/sessions/([0-9a-f]+)/jobs/([0-9a-f]+))", guarded([this](const auto& q, auto& r) { poll(q, r); }));
        server.Get(R"(/results/([0-9a-f]+)\.png)", guarded([this](const auto& q, auto& r) { result(q, r); }));
        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) res.set_content(json{{"error", httplib::status_message(res.status)}}.dump(),
                                                  "application/json");
        });
    }
};

EditService::EditService(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

EditService::~EditService() = default;

int EditService::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = impl_->server.bind_to_any_port(host);
        if (p < 0) throw Error("cannot bind " + host);
        return p;
    }
    if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void EditService::run() { impl_->server.listen_after_bind(); }

void EditService::wait_until_ready() { impl_->server.wait_until_ready(); }

void EditService::stop() { impl_->server.stop(); }

}  // namespace pm
