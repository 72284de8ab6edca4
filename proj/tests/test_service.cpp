#include <gtest/gtest.h>

#include <httplib.h>

#include <chrono>
#include <thread>

#include "pm/core/io.hpp"
#include "pm/service/service.hpp"
#include "pm/synthesis/constraints.hpp"
#include "support/fixtures.hpp"

using namespace pm;
using namespace pm::testing;
using json = nlohmann::json;

namespace {

class Harness {
public:
    explicit Harness(ServiceOptions opts = {}) : service_(opts) {
        port_ = service_.bind("127.0.0.1", 0);
        thread_ = std::thread([this] { service_.run(); });
        service_.wait_until_ready();
    }
    ~Harness() {
        service_.stop();
        thread_.join();
    }

    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(60, 0);
        return c;
    }

private:
    EditService service_;
    int port_ = 0;
    std::thread thread_;
};

std::string bytes_of(const std::vector<std::uint8_t>& v) { return {v.begin(), v.end()}; }

std::string png(const ImageBuffer& img) { return bytes_of(encode_png(img)); }

std::string mask_b64(const std::vector<std::uint8_t>& mask, Extent e) {
    ImageBuffer m(e.width, e.height, 1);
    for (std::size_t i = 0; i < mask.size(); ++i) m.data()[i] = mask[i] ? 1.0f : 0.0f;
    return httplib::detail::base64_encode(png(m));
}

std::string create(httplib::Client& c, const ImageBuffer& img) {
    const auto res = c.Post("/sessions", png(img), "image/png");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 201) << res->body;
    return json::parse(res->body)["id"];
}

httplib::Result submit(httplib::Client& c, const std::string& session, const json& request) {
    return c.Post("/sessions/" + session + "/edits", request.dump(), "application/json");
}

json poll_until_finished(httplib::Client& c, const std::string& url) {
    for (int i = 0; i < 6000; ++i) {
        const auto res = c.Get(url);
        EXPECT_EQ(res->status, 200);
        const json j = json::parse(res->body);
        if (j["state"] != "running") return j;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ADD_FAILURE() << "job did not finish";
    return {};
}

std::vector<std::uint8_t> square_hole(Extent e, int x0, int y0, int x1, int y1) {
    std::vector<std::uint8_t> hole(std::size_t(e.width) * std::size_t(e.height), 0);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) hole[std::size_t(y) * std::size_t(e.width) + std::size_t(x)] = 1;
    return hole;
}

const json kQuick{{"patch", 5}, {"minDim", 16}, {"coarseIterations", 4}, {"fineIterations", 2}};

json quick_with(const json& extra) {
    json j = kQuick;
    j.update(extra);
    return j;
}

}  // namespace

TEST(Service, PreviewExtentCapsTheLongerSide) {
    EXPECT_EQ(preview_extent({2000, 1500}, 512), (Extent{512, 384}));
    EXPECT_EQ(preview_extent({1500, 2000}, 512), (Extent{384, 512}));
    EXPECT_EQ(preview_extent({300, 200}, 512), (Extent{300, 200}));
}

TEST(Service, AnnotationJsonRoundTrips) {
    const Annotations a = parse_annotations(
        "line free 1 2 30 4\nline slope 0 5 40 9\nline pos 1 1 20 20 2 2 22 21\nregion translate 3 3 9 9\n"
        "region scale 4 4 12 12 1.5\nregion move 2 2 8 8 5 -1\n");
    const json j = annotations_to_json(a);
    EXPECT_EQ(j.size(), 6u);
    EXPECT_EQ(annotations_from_json(json::parse(j.dump())), a);
    EXPECT_THROW(annotations_from_json(json::parse(R"([{"type":"line","kind":"wavy","x0":0,"y0":0,"x1":1,"y1":1}])")),
                 InputError);
    EXPECT_THROW(annotations_from_json(json::parse(R"([{"type":"line","kind":"free"}])")), InputError);
}

TEST(Service, SessionCreationAndUploadErrors) {
    ServiceOptions opts;
    opts.max_upload_bytes = 50000;
    Harness h(opts);
    auto c = h.client();

    const auto ok = c.Post("/sessions", png(natural_scene(64, 48, 1)), "image/png");
    ASSERT_TRUE(ok);
    EXPECT_EQ(ok->status, 201);
    const json j = json::parse(ok->body);
    EXPECT_TRUE(j.contains("id"));
    EXPECT_EQ(ok->get_header_value("Access-Control-Allow-Origin"), "*");

    const auto bad = c.Post("/sessions", std::string("\x89PNG\r\n\x1a\n garbage", 17), "image/png");
    EXPECT_EQ(bad->status, 400);

    const auto big = c.Post("/sessions", png(white_noise(200, 200, 3, 2)), "image/png");
    EXPECT_EQ(big->status, 413);

    httplib::MultipartFormDataItems items{{"image", png(natural_scene(40, 30, 3)), "a.png", "image/png"}};
    const auto multi = c.Post("/sessions", items);
    EXPECT_EQ(multi->status, 201);
}

TEST(Service, LargeUploadIsStoredAtPreviewSize) {
    Harness h;
    auto c = h.client();
    const std::string id = create(c, constant_image(2000, 1500, 3, 0.4f));
    const auto s = c.Get("/sessions/" + id);
    ASSERT_EQ(s->status, 200);
    const json j = json::parse(s->body);
    EXPECT_EQ(j["width"], 512);
    EXPECT_EQ(j["height"], 384);
    EXPECT_EQ(j["state"], "idle");
}

TEST(Service, CorsPreflight) {
    Harness h;
    auto c = h.client();
    const auto res = c.Options("/sessions");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 204);
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
    EXPECT_NE(res->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
}

TEST(Service, CompleteJobProducesAFetchablePng) {
    Harness h;
    auto c = h.client();
    const ImageBuffer img = brick_wall(64, 48, 4);
    const std::string id = create(c, img);
    const json req{{"tool", "complete"},
                   {"masks", {{"hole", mask_b64(square_hole(img.extent(), 20, 14, 36, 30), img.extent())}}},
                   {"params", kQuick}};
    const auto res = submit(c, id, req);
    ASSERT_EQ(res->status, 202) << res->body;
    const json accepted = json::parse(res->body);
    const json done = poll_until_finished(c, accepted["statusUrl"]);
    ASSERT_EQ(done["state"], "done") << done.dump();
    EXPECT_DOUBLE_EQ(done["progress"].get<double>(), 1.0);
    const auto result = c.Get(done["resultPngUrl"].get<std::string>());
    ASSERT_EQ(result->status, 200);
    EXPECT_EQ(result->get_header_value("Content-Type"), "image/png");
    const ImageBuffer out = decode_image(std::span(reinterpret_cast<const std::uint8_t*>(result->body.data()),
                                                   result->body.size()));
    EXPECT_EQ(out.extent(), img.extent());
}

TEST(Service, SameRequestGivesIdenticalBytes) {
    Harness h;
    auto c = h.client();
    const ImageBuffer img = natural_scene(56, 40, 5);
    const std::string id = create(c, img);
    const json req{{"tool", "retarget"}, {"params", quick_with({{"width", 44}, {"height", 40}, {"seed", 3}})}};
    std::vector<std::string> bodies;
    for (int i = 0; i < 2; ++i) {
        const auto res = submit(c, id, req);
        ASSERT_EQ(res->status, 202);
        const json done = poll_until_finished(c, json::parse(res->body)["statusUrl"]);
        ASSERT_EQ(done["state"], "done");
        bodies.push_back(c.Get(done["resultPngUrl"].get<std::string>())->body);
    }
    EXPECT_EQ(bodies[0], bodies[1]);
}

TEST(Service, BusySessionRejectsSecondSubmitAndReportsProgress) {
    Harness h;
    auto c = h.client();
    const ImageBuffer img = natural_scene(160, 120, 6);
    const std::string id = create(c, img);
    const json req{{"tool", "retarget"},
                   {"params", {{"width", 120}, {"height", 120}, {"coarseIterations", 30}, {"fineIterations", 6}}}};
    const auto first = submit(c, id, req);
    ASSERT_EQ(first->status, 202);
    const auto second = submit(c, id, req);
    EXPECT_EQ(second->status, 409);

    const std::string url = json::parse(first->body)["statusUrl"];
    bool seen_mid_run = false;
    for (int i = 0; i < 20000 && !seen_mid_run; ++i) {
        const json j = json::parse(c.Get(url)->body);
        if (j["state"] != "running") break;
        const double p = j["progress"];
        seen_mid_run = p > 0.0 && p < 1.0;
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    EXPECT_TRUE(seen_mid_run);
    EXPECT_EQ(poll_until_finished(c, url)["state"], "done");
    EXPECT_EQ(submit(c, id, json{{"tool", "retarget"}, {"params", quick_with({{"width", 100}, {"height", 100}})}})
                  ->status,
              202);
}

TEST(Service, UnsupportedLabelIs422AndNamesIt) {
    Harness h;
    auto c = h.client();
    const ImageBuffer img = natural_scene(64, 48, 7);
    const std::string id = create(c, img);
    ImageBuffer labels(64, 48, 3);
    for (int y = 16; y < 32; ++y)
        for (int x = 20; x < 40; ++x) labels.at(x, y, 0) = 1.0f;
    const json req{{"tool", "complete"},
                   {"masks",
                    {{"hole", mask_b64(square_hole(img.extent(), 20, 16, 40, 32), img.extent())},
                     {"labels", httplib::detail::base64_encode(png(labels))}}},
                   {"params", kQuick}};
    const auto res = submit(c, id, req);
    ASSERT_EQ(res->status, 422);
    const json j = json::parse(res->body);
    EXPECT_EQ(j["label"], 1);
    EXPECT_NE(j["error"].get<std::string>().find("label 1"), std::string::npos);
}

TEST(Service, RequestValidation) {
    Harness h;
    auto c = h.client();
    const ImageBuffer img = natural_scene(64, 48, 8);
    const std::string id = create(c, img);
    EXPECT_EQ(submit(c, "0123456789abcdef", json{{"tool", "retarget"}})->status, 404);
    EXPECT_EQ(c.Post("/sessions/" + id + "/edits", "{not json", "application/json")->status, 400);
    EXPECT_EQ(submit(c, id, json{{"tool", "paint"}})->status, 400);
    EXPECT_EQ(submit(c, id, json{{"tool", "complete"}})->status, 400);
    EXPECT_EQ(submit(c, id, json{{"tool", "reshuffle"}, {"params", {{"region", {1, 2}}}}})->status, 400);
    // Geometry the tools reject.
    EXPECT_EQ(submit(c, id, json{{"tool", "reshuffle"}, {"params", {{"region", {40, 10, 60, 30}}, {"offset", {10, 0}}}}})
                  ->status,
              422);
    EXPECT_EQ(submit(c, id, json{{"tool", "localScale"}, {"params", {{"region", {20, 20, 30, 30}}, {"factor", 9.0}}}})
                  ->status,
              422);
    EXPECT_EQ(submit(c, id, json{{"tool", "retarget"}, {"params", {{"width", 3}, {"height", 48}}}})->status, 422);
    const json border_hole{{"tool", "complete"},
                           {"masks", {{"hole", mask_b64(square_hole(img.extent(), 0, 10, 10, 20), img.extent())}}}};
    EXPECT_EQ(submit(c, id, border_hole)->status, 422);
    const json wrong_size{{"tool", "complete"},
                          {"masks", {{"hole", mask_b64(square_hole({32, 32}, 8, 8, 16, 16), {32, 32})}}}};
    EXPECT_EQ(submit(c, id, wrong_size)->status, 422);
    const json outside{{"tool", "retarget"},
                       {"params", {{"width", 50}, {"height", 48}}},
                       {"annotations", json::array({{{"type", "line"}, {"kind", "free"}, {"x0", 0}, {"y0", 0},
                                                     {"x1", 500}, {"y1", 4}}})}};
    EXPECT_EQ(submit(c, id, outside)->status, 422);
    // None of the rejected requests started a job.
    EXPECT_EQ(json::parse(c.Get("/sessions/" + id)->body)["state"], "idle");

    EXPECT_EQ(c.Get("/sessions/" + id + "/jobs/0123456789abcdef")->status, 404);
    EXPECT_EQ(c.Get("/sessions/fedcba9876543210")->status, 404);
    EXPECT_EQ(c.Get("/results/0123456789abcdef.png")->status, 404);
}

TEST(Service, ReshuffleAndLocalScaleRun) {
    Harness h;
    auto c = h.client();
    const std::string id = create(c, brick_wall(64, 48, 9));
    const json reshuffle{{"tool", "reshuffle"},
                         {"params", quick_with({{"region", {8, 8, 24, 24}}, {"offset", {20, 12}},
                                                         {"init", "interpolate"}})}};
    const auto r1 = submit(c, id, reshuffle);
    ASSERT_EQ(r1->status, 202) << r1->body;
    EXPECT_EQ(poll_until_finished(c, json::parse(r1->body)["statusUrl"])["state"], "done");
    const json scale{{"tool", "localScale"},
                     {"params", quick_with({{"region", {24, 16, 40, 32}}, {"factor", 1.2}})}};
    const auto r2 = submit(c, id, scale);
    ASSERT_EQ(r2->status, 202) << r2->body;
    EXPECT_EQ(poll_until_finished(c, json::parse(r2->body)["statusUrl"])["state"], "done");
}

TEST(Service, FailedSynthesisCarriesAReason) {
    // Thin hole stripes leave whole exterior patches at full resolution but
    // none at the coarser pyramid level, so the job fails after acceptance.
    Harness h;
    auto c = h.client();
    const ImageBuffer img = natural_scene(96, 96, 10);
    const std::string id = create(c, img);
    std::vector<std::uint8_t> hole(img.pixel_count(), 0);
    for (int y = 1; y < 95; ++y)
        for (int x = 8; x < 95; x += 8) hole[std::size_t(y) * 96 + std::size_t(x)] = 1;
    const json req{{"tool", "complete"}, {"masks", {{"hole", mask_b64(hole, img.extent())}}}};
    const auto res = submit(c, id, req);
    ASSERT_EQ(res->status, 202) << res->body;
    const json done = poll_until_finished(c, json::parse(res->body)["statusUrl"]);
    EXPECT_EQ(done["state"], "failed");
    EXPECT_FALSE(done["reason"].get<std::string>().empty());
    EXPECT_FALSE(done.contains("resultPngUrl"));
}
