#include "usvis/service.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "usvis/frames.hpp"
#include "usvis/fusion_json.hpp"
#include "usvis/png_io.hpp"
#include "usvis/render.hpp"
#include "usvis/vvol.hpp"

namespace usvis {

Session::Session(std::string id, Volume volume, Volume filtered, FeatureSet features)
    : id_(std::move(id)),
      volume_(std::move(volume)),
      filtered_(std::move(filtered)),
      features_(std::move(features)),
      created_(std::chrono::system_clock::now()) {
  if (!(features_.source_dims() == volume_.dims()) || !(filtered_.dims() == volume_.dims())) {
    throw Error(ErrorCode::DimsMismatch, "session volumes and features differ in dims");
  }
}

std::optional<FusionParams> Session::last_params() const {
  std::lock_guard lock(params_mutex_);
  return last_params_;
}

void Session::set_last_params(FusionParams params) {
  std::lock_guard lock(params_mutex_);
  last_params_ = std::move(params);
}

std::shared_ptr<const FusedVolume> Session::fused(const FusionParams& params) {
  std::string key = fusion_params_to_json(params).dump();
  std::lock_guard lock(fused_mutex_);
  if (!fused_ || key != fused_key_) {
    fused_ = std::make_shared<const FusedVolume>(fuse(filtered_, features_, params));
    fused_key_ = std::move(key);
  }
  return fused_;
}

SessionStore::SessionStore(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error(ErrorCode::InvalidArgument, "session capacity must be positive");
}

std::string SessionStore::next_id() {
  std::lock_guard lock(mutex_);
  std::ostringstream out;
  out << "v" << std::hex << ++counter_;
  return out.str();
}

void SessionStore::insert(std::shared_ptr<Session> session) {
  std::lock_guard lock(mutex_);
  const std::string id = session->id();
  if (auto it = sessions_.find(id); it != sessions_.end()) {
    order_.erase(it->second.second);
    sessions_.erase(it);
  }
  order_.push_front(id);
  sessions_.emplace(id, std::make_pair(std::move(session), order_.begin()));
  while (sessions_.size() > capacity_) {
    sessions_.erase(order_.back());
    order_.pop_back();
  }
}

std::shared_ptr<Session> SessionStore::find(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return nullptr;
  order_.splice(order_.begin(), order_, it->second.second);
  return it->second.first;
}

std::size_t SessionStore::size() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

namespace {

using nlohmann::json;

// Client mistake with an HTTP status attached.
struct HttpFailure {
  int status;
  std::string message;
};

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, json{{"error", message}});
}

double parse_double(const std::string& field, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw HttpFailure{400, "query '" + field + "': expected a number"};
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

// Query parameters use the CLI flag names.
void apply_upload_query(const httplib::Request& req, BilateralParams& bilateral, FeatureConfig& features,
                        Spacing& spacing) {
  if (req.has_param("sigma-spatial")) {
    bilateral.sigma_spatial = parse_double("sigma-spatial", req.get_param_value("sigma-spatial"));
    bilateral.window_radius = std::max(bilateral.window_radius,
                                       static_cast<int>(std::ceil(2.0 * bilateral.sigma_spatial)));
  }
  if (req.has_param("sigma-range")) {
    bilateral.sigma_range = parse_double("sigma-range", req.get_param_value("sigma-range"));
  }
  if (req.has_param("scales")) {
    std::vector<double> scales;
    for (const auto& s : split(req.get_param_value("scales"), ',')) scales.push_back(parse_double("scales", s));
    features.frangi_params.scales = scales;
  }
  if (req.has_param("features")) features.select(split(req.get_param_value("features"), ','));
  if (req.has_param("bright-vessels")) {
    const std::string v = req.get_param_value("bright-vessels");
    features.frangi_params.bright_vessels = (v == "1" || v == "true");
  }
  if (req.has_param("spacing")) {
    const auto parts = split(req.get_param_value("spacing"), ',');
    if (parts.size() != 3) throw HttpFailure{400, "query 'spacing': expected sx,sy,sz"};
    spacing = Spacing{static_cast<float>(parse_double("spacing", parts[0])),
                      static_cast<float>(parse_double("spacing", parts[1])),
                      static_cast<float>(parse_double("spacing", parts[2]))};
  }
}

Volume decode_upload(const httplib::Request& req, Spacing spacing) {
  try {
    if (req.is_multipart_form_data()) {
      std::vector<const httplib::MultipartFormData*> parts;
      for (const auto& [name, part] : req.files) parts.push_back(&part);
      std::stable_sort(parts.begin(), parts.end(), [](const auto* a, const auto* b) {
        return natural_less(a->filename.empty() ? a->name : a->filename,
                            b->filename.empty() ? b->name : b->filename);
      });
      FrameStack stack;
      stack.pixel_spacing_x = spacing.sx;
      stack.pixel_spacing_y = spacing.sy;
      stack.slice_spacing = spacing.sz;
      for (const auto* part : parts) {
        const auto* data = reinterpret_cast<const std::byte*>(part->content.data());
        stack.frames.push_back(decode_gray_png({data, part->content.size()}));
      }
      return ingest_frames(stack);
    }
    const auto* data = reinterpret_cast<const std::byte*>(req.body.data());
    return decode_vvol({data, req.body.size()});
  } catch (const Error& e) {
    throw HttpFailure{400, "malformed body: " + std::string(e.what())};
  }
}

template <typename T>
T field_as(const json& body, const char* field) {
  try {
    return body.at(field).get<T>();
  } catch (const json::exception&) {
    throw HttpFailure{422, std::string("field '") + field + "': wrong type"};
  }
}

struct RenderRequest {
  FusionParams params;
  Camera camera;
  RenderMode mode = RenderMode::MipColor;
};

RenderRequest parse_render_request(const std::string& text, const Session& session) {
  json body;
  try {
    body = text.empty() ? json::object() : json::parse(text);
  } catch (const json::exception& e) {
    throw HttpFailure{400, std::string("malformed JSON: ") + e.what()};
  }
  if (!body.is_object()) throw HttpFailure{400, "body must be a JSON object"};

  RenderRequest request;
  try {
    if (body.contains("params")) {
      request.params = fusion_params_from_json(body.at("params"));
      resolve_params(session.features(), request.params);
    } else {
      request.params = session.last_params().value_or(FusionParams::uniform(session.features().names()));
    }
  } catch (const Error& e) {
    throw HttpFailure{422, e.what()};
  }

  if (body.contains("rotation")) {
    const auto rot = field_as<std::vector<double>>(body, "rotation");
    if (rot.size() != 3) throw HttpFailure{422, "field 'rotation': expected [rx, ry, rz]"};
    request.camera.rotation_deg = {rot[0], rot[1], rot[2]};
  }
  if (body.contains("mode")) {
    try {
      request.mode = parse_render_mode(field_as<std::string>(body, "mode"));
    } catch (const Error& e) {
      throw HttpFailure{422, std::string("field 'mode': ") + e.what()};
    }
  }
  if (body.contains("size")) {
    const auto size = field_as<std::vector<long long>>(body, "size");
    if (size.size() != 2 || size[0] < 1 || size[1] < 1 || size[0] > 4096 || size[1] > 4096) {
      throw HttpFailure{422, "field 'size': expected [w, h] within 1..4096"};
    }
    request.camera.width = static_cast<std::size_t>(size[0]);
    request.camera.height = static_cast<std::size_t>(size[1]);
  }
  return request;
}

}  // namespace

struct Service::Impl {
  explicit Impl(ServiceOptions opts) : options(std::move(opts)), store(options.max_sessions) {
    options.bilateral.validate();
    server.set_payload_max_length(options.max_upload_bytes);
    routes();
  }

  void routes() {
    server.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
    });
    server.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      } catch (...) {
        send_error(res, 500, "internal error");
      }
    });

    server.Post("/api/v1/volumes", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { upload(req, res); });
    });
    server.Get(R"(/api/v1/volumes/([^/]+)/meta)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { meta(req, res); });
    });
    server.Post(R"(/api/v1/volumes/([^/]+)/render)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { render(req, res); });
    });
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const HttpFailure& f) {
      send_error(res, f.status, f.message);
    }
  }

  std::shared_ptr<Session> session_for(const httplib::Request& req) {
    auto session = store.find(req.matches[1].str());
    if (!session) throw HttpFailure{404, "unknown volume id '" + req.matches[1].str() + "'"};
    return session;
  }

  void upload(const httplib::Request& req, httplib::Response& res) {
    BilateralParams bilateral = options.bilateral;
    FeatureConfig features = options.features;
    Spacing spacing;
    apply_upload_query(req, bilateral, features, spacing);
    Volume volume = decode_upload(req, spacing);
    try {
      Volume filtered = bilateral_fast(volume, bilateral);
      FeatureSet set = build_feature_set(filtered, features);
      auto session = std::make_shared<Session>(store.next_id(), std::move(volume), std::move(filtered),
                                               std::move(set));
      const std::string id = session->id();
      store.insert(std::move(session));
      send_json(res, 201, json{{"id", id}});
    } catch (const Error& e) {
      throw HttpFailure{422, e.what()};
    }
  }

  void meta(const httplib::Request& req, httplib::Response& res) {
    const auto session = session_for(req);
    const Dims& d = session->volume().dims();
    const Spacing& s = session->volume().spacing();
    const FusionParams params =
        session->last_params().value_or(FusionParams::uniform(session->features().names()));
    send_json(res, 200,
              json{{"id", session->id()},
                   {"dims", {d.nx, d.ny, d.nz}},
                   {"spacing", {s.sx, s.sy, s.sz}},
                   {"features", session->features().names()},
                   {"params", fusion_params_to_json(params)}});
  }

  void render(const httplib::Request& req, httplib::Response& res) {
    const auto session = session_for(req);
    const RenderRequest request = parse_render_request(req.body, *session);
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::byte> png;
    try {
      const auto fused = session->fused(request.params);
      png = encode_png(render_fused(*fused, request.camera, request.mode));
    } catch (const Error& e) {
      throw HttpFailure{422, e.what()};
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    session->set_last_params(request.params);
    std::ostringstream header;
    header.precision(3);
    header << std::fixed << ms;
    res.set_header("X-Render-Time-Ms", header.str());
    res.set_header("Access-Control-Expose-Headers", "X-Render-Time-Ms");
    res.status = 200;
    res.set_content(std::string(reinterpret_cast<const char*>(png.data()), png.size()), "image/png");
  }

  ServiceOptions options;
  SessionStore store;
  httplib::Server server;
  int port = -1;
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() { stop(); }

int Service::bind() {
  if (impl_->port >= 0) return impl_->port;
  const auto& o = impl_->options;
  if (o.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(o.host);
  } else if (impl_->server.bind_to_port(o.host, o.port)) {
    impl_->port = o.port;
  }
  if (impl_->port <= 0) {
    impl_->port = -1;
    throw Error(ErrorCode::IoError, "cannot bind " + o.host + ":" + std::to_string(o.port));
  }
  return impl_->port;
}

void Service::run() {
  bind();
  impl_->server.listen_after_bind();
}

void Service::stop() {
  if (impl_) impl_->server.stop();
}

SessionStore& Service::sessions() noexcept { return impl_->store; }

}  // namespace usvis
