#include <gtest/gtest.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <future>
#include <thread>

#include "test_support.hpp"
#include "usvis/phantom.hpp"
#include "usvis/png_io.hpp"
#include "usvis/service.hpp"
#include "usvis/vvol.hpp"

using namespace usvis;
using json = nlohmann::json;

namespace {

std::string vvol_body(const Volume& v) {
  const auto bytes = encode_vvol(v);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

Volume phantom(std::size_t n = 16, std::uint64_t seed = 1) {
  PhantomSpec spec;
  spec.kind = PhantomKind::Noisy;
  spec.dims = Dims{n, n, n};
  spec.radius = 3;
  spec.seed = seed;
  return make_phantom(spec);
}

/// Service on an ephemeral port, served from a background thread.
class Running {
 public:
  explicit Running(ServiceOptions options = small_options()) {
    options.port = 0;
    service_ = std::make_unique<Service>(options);
    port_ = service_->bind();
    thread_ = std::thread([this] { service_->run(); });
    // Wait for the accept loop so stop() cannot race ahead of it.
    httplib::Client probe("127.0.0.1", port_);
    for (int i = 0; i < 500 && !probe.Get("/api/v1/volumes/none/meta"); ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
  ~Running() {
    service_->stop();
    thread_.join();
  }

  static ServiceOptions small_options() {
    ServiceOptions o;
    o.features.frangi_params.scales = {1, 2};
    o.features.gvf_params.iterations = 20;
    return o;
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }
  Service& service() { return *service_; }

  std::string upload(const Volume& v, const std::string& query = "") {
    auto res = client().Post("/api/v1/volumes" + query, vvol_body(v), "application/octet-stream");
    EXPECT_TRUE(res);
    if (!res) return "";
    EXPECT_EQ(res->status, 201) << res->body;
    return json::parse(res->body).value("id", "");
  }

  httplib::Result render(const std::string& id, const json& body) {
    return client().Post("/api/v1/volumes/" + id + "/render", body.dump(), "application/json");
  }

 private:
  std::unique_ptr<Service> service_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST(SessionStore, EvictsLeastRecentlyUsed) {
  SessionStore store(2);
  auto make = [&](std::size_t n) {
    const Dims d{n, n, n};
    FeatureSet set(d);
    set.add("sobel", Volume::filled(d, 0.0f));
    return std::make_shared<Session>(store.next_id(), Volume::filled(d, 0.1f), Volume::filled(d, 0.1f), set);
  };
  auto a = make(2);
  auto b = make(3);
  auto c = make(4);
  EXPECT_NE(a->id(), b->id());
  store.insert(a);
  store.insert(b);
  EXPECT_TRUE(store.find(a->id()));  // a becomes most recent
  store.insert(c);
  EXPECT_EQ(store.size(), 2u);
  EXPECT_TRUE(store.find(a->id()));
  EXPECT_FALSE(store.find(b->id()));
  EXPECT_TRUE(store.find(c->id()));
  EXPECT_THROW(SessionStore(0), Error);
}

TEST(Session, RejectsMismatchedFeatures) {
  const Dims d{3, 3, 3};
  FeatureSet set(Dims{3, 3, 4});
  EXPECT_THROW(Session("x", Volume::filled(d, 0), Volume::filled(d, 0), set), Error);
}

TEST(Session, ReusesFusedVolumeWhileParamsHold) {
  const Dims d{4, 4, 4};
  FeatureSet set(d);
  set.add("sobel", Volume::filled(d, 0.5f));
  Session session("s", Volume::filled(d, 0.3f), Volume::filled(d, 0.3f), set);
  const auto params = FusionParams::uniform({"sobel"}, 1.0);
  const auto a = session.fused(params);
  EXPECT_EQ(session.fused(params), a);
  auto other = params;
  other.gain = 2.0;
  const auto b = session.fused(other);
  EXPECT_NE(b, a);
  EXPECT_GT(b->opacity[0], a->opacity[0]);
}

TEST(Service, UploadMetaRender) {
  Running server;
  const Volume v = phantom();
  const std::string id = server.upload(v);
  ASSERT_FALSE(id.empty());
  const std::string second = server.upload(v);
  EXPECT_NE(id, second);

  auto meta = server.client().Get("/api/v1/volumes/" + id + "/meta");
  ASSERT_TRUE(meta);
  EXPECT_EQ(meta->status, 200);
  const json m = json::parse(meta->body);
  EXPECT_EQ(m["dims"], json::array({16, 16, 16}));
  EXPECT_EQ(m["features"], json::array({"sobel", "gvf", "frangi"}));
  EXPECT_EQ(m["params"]["weights"].size(), 3u);

  const json body = {{"params", {{"weights", {{"frangi", 1}}}, {"gain", 0}}},
                     {"rotation", {0, 90, 0}},
                     {"mode", "mip"},
                     {"size", {24, 20}}};
  auto first = server.render(id, body);
  ASSERT_TRUE(first);
  ASSERT_EQ(first->status, 200) << first->body;
  EXPECT_EQ(first->get_header_value("Content-Type"), "image/png");
  EXPECT_TRUE(first->has_header("X-Render-Time-Ms"));
  EXPECT_GE(std::stod(first->get_header_value("X-Render-Time-Ms")), 0.0);
  EXPECT_EQ(first->get_header_value("Access-Control-Allow-Origin"), "*");
  const auto* data = reinterpret_cast<const std::byte*>(first->body.data());
  const Rgba8Image img = decode_rgba_png({data, first->body.size()});
  EXPECT_EQ(img.width, 24u);
  EXPECT_EQ(img.height, 20u);
  for (std::size_t i = 0; i < img.pixels.size(); i += 4) {
    EXPECT_EQ(img.pixels[i], img.pixels[i + 1]);  // gray
    EXPECT_EQ(img.pixels[i + 3], 255);
  }

  auto again = server.render(id, body);
  ASSERT_TRUE(again);
  EXPECT_EQ(again->body, first->body);

  // The last params stick to the session.
  const json last = json::parse(server.client().Get("/api/v1/volumes/" + id + "/meta")->body);
  EXPECT_EQ(last["params"]["weights"], json({{"frangi", 1.0}}));
  EXPECT_EQ(last["params"]["gain"], 0.0);
}

TEST(Service, RejectsBadUploads) {
  Running server;
  auto garbage = server.client().Post("/api/v1/volumes", "garbage", "application/octet-stream");
  ASSERT_TRUE(garbage);
  EXPECT_EQ(garbage->status, 400);
  EXPECT_NE(garbage->body.find("malformed"), std::string::npos);
  auto bad_query = server.client().Post("/api/v1/volumes?sigma-range=abc", vvol_body(phantom()),
                                        "application/octet-stream");
  ASSERT_TRUE(bad_query);
  EXPECT_EQ(bad_query->status, 400);
  // Too small for the configured Frangi scales.
  auto tiny = server.client().Post("/api/v1/volumes", vvol_body(Volume::filled(Dims{3, 3, 3}, 0.5f)),
                                   "application/octet-stream");
  ASSERT_TRUE(tiny);
  EXPECT_EQ(tiny->status, 422);
}

TEST(Service, UploadSizeCap) {
  ServiceOptions o = Running::small_options();
  o.max_upload_bytes = 1024;
  Running server(o);
  auto res = server.client().Post("/api/v1/volumes", vvol_body(phantom()), "application/octet-stream");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 413);
}

TEST(Service, QueryParamsOverrideDefaults) {
  Running server;
  const std::string id = server.upload(phantom(), "?features=frangi&scales=1,1.5&bright-vessels=true");
  const json m = json::parse(server.client().Get("/api/v1/volumes/" + id + "/meta")->body);
  EXPECT_EQ(m["features"], json::array({"frangi"}));
}

TEST(Service, RenderErrors) {
  Running server;
  const std::string id = server.upload(phantom());
  auto missing = server.render("nope", json::object());
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(server.client().Get("/api/v1/volumes/nope/meta")->status, 404);

  auto zero = server.render(id, {{"params", {{"weights", {{"frangi", 0}, {"sobel", 0}}}}}});
  ASSERT_TRUE(zero);
  EXPECT_EQ(zero->status, 422);
  EXPECT_NE(zero->body.find("weights"), std::string::npos);

  auto unknown = server.render(id, {{"params", {{"weights", {{"hog", 1}}}}}});
  EXPECT_EQ(unknown->status, 422);
  EXPECT_NE(unknown->body.find("hog"), std::string::npos);
  EXPECT_EQ(server.render(id, {{"mode", "hologram"}})->status, 422);
  EXPECT_EQ(server.render(id, {{"rotation", {1, 2}}})->status, 422);
  EXPECT_EQ(server.render(id, {{"size", {0, 10}}})->status, 422);
  auto malformed = server.client().Post("/api/v1/volumes/" + id + "/render", "{oops", "application/json");
  EXPECT_EQ(malformed->status, 400);
}

TEST(Service, CorsPreflight) {
  Running server;
  auto res = server.client().Options("/api/v1/volumes");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_NE(res->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
}

TEST(Service, MultipartFramesInNaturalOrder) {
  Running server;
  httplib::MultipartFormDataItems items;
  // Sent out of order; frame k has intensity k.
  for (int k : {10, 2, 0, 1, 11, 3, 9, 4, 8, 5, 7, 6}) {
    GrayImage frame;
    frame.width = 12;
    frame.height = 11;
    frame.pixels.assign(frame.width * frame.height, static_cast<std::uint16_t>(10 * k));
    const auto bytes = encode_gray_png(frame);
    items.push_back({"frame" + std::to_string(k), std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                     "frame" + std::to_string(k) + ".png", "image/png"});
  }
  auto res = server.client().Post("/api/v1/volumes?spacing=0.5,0.5,1", items);
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201) << res->body;
  const std::string id = json::parse(res->body)["id"];
  const json m = json::parse(server.client().Get("/api/v1/volumes/" + id + "/meta")->body);
  EXPECT_EQ(m["dims"], json::array({12, 11, 12}));
  EXPECT_EQ(m["spacing"], json::array({0.5, 0.5, 1.0}));
  auto session = server.service().sessions().find(id);
  ASSERT_TRUE(session);
  for (std::size_t z = 0; z < 12; ++z) EXPECT_FLOAT_EQ(session->volume()(3, 3, z), float(10 * z) / 255.0f);
}

TEST(Service, LruEvictsOldestSession) {
  ServiceOptions o = Running::small_options();
  o.max_sessions = 2;
  Running server(o);
  const std::string a = server.upload(phantom(16, 1));
  const std::string b = server.upload(phantom(16, 2));
  EXPECT_EQ(server.client().Get("/api/v1/volumes/" + a + "/meta")->status, 200);
  const std::string c = server.upload(phantom(16, 3));
  EXPECT_EQ(server.client().Get("/api/v1/volumes/" + a + "/meta")->status, 200);
  EXPECT_EQ(server.client().Get("/api/v1/volumes/" + b + "/meta")->status, 404);
  EXPECT_EQ(server.client().Get("/api/v1/volumes/" + c + "/meta")->status, 200);
}

TEST(Service, ConcurrentRendersMatchSerial) {
  Running server;
  const std::string id = server.upload(phantom());
  const json body = {{"params", {{"weights", {{"frangi", 2}, {"sobel", 1}, {"gvf", 1}}}, {"gain", 1.5}}},
                     {"rotation", {20, 30, 40}},
                     {"mode", "composite"},
                     {"size", {32, 32}}};
  const std::string serial = server.render(id, body)->body;
  std::vector<std::future<std::string>> results;
  for (int i = 0; i < 6; ++i) {
    results.push_back(std::async(std::launch::async, [&] {
      auto res = server.render(id, body);
      return res && res->status == 200 ? res->body : std::string();
    }));
  }
  for (auto& r : results) EXPECT_EQ(r.get(), serial);
}
