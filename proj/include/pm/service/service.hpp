#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include <json.hpp>

#include "pm/core/image.hpp"
#include "pm/synthesis/constraints.hpp"

namespace pm {

struct ServiceOptions {
    int preview_max_dim = 512;
    std::size_t max_upload_bytes = std::size_t(20) << 20;
    int workers = 1;
    std::string cors_origin = "*";
};

/// Size of the stored preview: the longer side is capped at `max_dim`,
/// keeping the aspect ratio. Smaller images are kept as they are.
Extent preview_extent(Extent e, int max_dim);

/// Annotation records as JSON. One object per record of the text format,
/// with the same fields: {"type": "line"|"region", "kind": ..., "x0", "y0",
/// "x1", "y1"} plus "tx0".."ty1" for fixed-position lines, "scale" for
/// scaled regions, and "dx", "dy" for moved regions.
nlohmann::json annotations_to_json(const Annotations& a);
Annotations annotations_from_json(const nlohmann::json& j);

/// HTTP front end for the editing tools. Sessions hold a preview-sized copy
/// of an uploaded image; every edit re-runs from that copy on a shared
/// worker pool, one running job per session.
///
///   POST /sessions                       image bytes (raw or multipart "image")
///   GET  /sessions/{id}
///   POST /sessions/{id}/edits            JSON edit request
///   GET  /sessions/{id}/jobs/{jobId}
///   GET  /results/{token}.png
class EditService {
public:
    explicit EditService(ServiceOptions options = {});
    ~EditService();
    EditService(const EditService&) = delete;
    EditService& operator=(const EditService&) = delete;

    /// Binds the listening socket and returns the port. Port 0 picks a free
    /// port. Throws Error when binding fails.
    int bind(const std::string& host, int port);
    /// Serves until stop() is called.
    void run();
    /// Blocks until run() is accepting connections.
    void wait_until_ready();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace pm
