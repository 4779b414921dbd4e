#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teacar/bus.hpp"

namespace teacar::recorder {

struct DatasetSample {
  std::int64_t t_ns = 0;
  double steering = 0.0;
  std::string image_file;  // relative to the dataset directory
  std::string source;
  std::vector<std::uint8_t> image;  // 144 x 224 x 3 RGB

  friend bool operator==(const DatasetSample&, const DatasetSample&) = default;
};

struct DatasetManifest {
  int version = 1;
  std::string image_format = "ppm_p6";
  std::size_t count = 0;
  nlohmann::json camera = nlohmann::json::object();
  std::string track_sha256;
  std::uint64_t seed = 0;
  std::string index_sha256;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<DatasetSample> samples;
};

std::string frame_name(std::size_t index);

std::vector<std::uint8_t> encode_ppm(std::span<const std::uint8_t> rgb, int width = 224,
                                     int height = 144);
/// FormatError unless the bytes are a 224x144 P6 image with maxval 255.
std::vector<std::uint8_t> decode_ppm(std::span<const std::uint8_t> bytes);

/// Streams samples into a dataset directory: frames/NNNNNN.ppm plus one
/// index.jsonl line each; finish() writes manifest.json.
class DatasetWriter {
 public:
  /// ConfigError if the directory cannot be created or already holds a dataset.
  DatasetWriter(std::filesystem::path dir, DatasetManifest meta);
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  /// Assigns image_file when empty. ValidationError for a bad sample.
  void append(DatasetSample sample);
  std::size_t count() const { return count_; }
  const std::filesystem::path& dir() const { return dir_; }
  DatasetManifest finish();
  bool finished() const { return finished_; }

 private:
  std::filesystem::path dir_;
  DatasetManifest meta_;
  std::ofstream index_;
  std::string index_text_;
  std::size_t count_ = 0;
  bool finished_ = false;
};

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
/// FormatError naming the offending index line for malformed JSON, missing or
/// unreadable frames, digest mismatches and out-of-range labels.
Dataset read_dataset(const std::filesystem::path& dir);

struct SteeringStamp {
  std::int64_t t_ns = 0;
  double value = 0.0;
  std::string source;
};

/// Index of the stamp nearest t_ns within +-window; on a tie the earlier one.
std::optional<std::size_t> nearest_within(std::int64_t t_ns, std::span<const SteeringStamp> stamps,
                                          std::int64_t window_ns);

struct RecorderOptions {
  std::int64_t sync_window_ns = 50'000'000;
  /// Only steering from this source labels frames; empty accepts every source.
  std::string label_source = "pure_pursuit";
  std::optional<std::size_t> max_samples;
};

/// Pairs camera frames with steering commands by timestamp. Bus callbacks
/// only queue finished samples; flush() writes them from one context.
class Recorder {
 public:
  Recorder(Bus& bus, Topic<ImageMsg> camera_topic, Topic<MotionCmd> steering_topic,
           RecorderOptions options = {});
  Recorder(const Recorder&) = delete;
  Recorder& operator=(const Recorder&) = delete;
  ~Recorder();

  void start(std::filesystem::path dir, DatasetManifest meta);
  bool active() const;
  /// Resolves what it can, flushes and writes the manifest.
  DatasetManifest stop();

  /// Writes queued samples; returns how many.
  std::size_t flush();

  std::size_t recorded() const;
  std::size_t skipped() const;
  std::size_t pending() const;
  bool full() const;
  const RecorderOptions& options() const { return options_; }

 private:
  struct PendingImage {
    std::int64_t t_ns;
    std::vector<std::uint8_t> image;
  };

  void on_image(const ImageMsg& img);
  void on_steering(const MotionCmd& cmd);
  /// `horizon_ns` is the latest timestamp seen; frames older than it by more
  /// than the window can no longer gain a better match.
  void resolve_locked(std::int64_t horizon_ns, bool final);

  Bus& bus_;
  RecorderOptions options_;
  mutable std::mutex mutex_;
  std::mutex write_mutex_;  // serializes flush() and stop()
  std::unique_ptr<DatasetWriter> writer_;
  bool active_ = false;
  std::deque<PendingImage> pending_;
  std::deque<SteeringStamp> history_;
  std::deque<DatasetSample> ready_;
  std::size_t accepted_ = 0;
  std::size_t skipped_ = 0;
  SubscriptionId image_sub_ = 0;
  SubscriptionId steering_sub_ = 0;
};

}  // namespace teacar::recorder
