#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "teacar/error.hpp"
#include "teacar/messages.hpp"

namespace teacar {

/// Typed handle to a registered topic. Obtain one from Bus::advertise.
template <class T>
struct Topic {
  std::string name;
};

enum class BusMode { stepped, live };

using SubscriptionId = std::uint64_t;
using PeriodicId = std::uint64_t;

/// Topic-based publish/subscribe bus.
///
/// Stepped mode runs on a virtual clock: publish() only enqueues, and step()
/// fires due periodic callbacks (ordered by due time, then registration) and
/// then drains the queues round by round, topics in registration order, FIFO
/// within a topic, subscribers in registration order. Messages published
/// while draining are delivered in a later round of the same step.
///
/// Live mode delivers synchronously inside publish() and is safe to call from
/// several threads. Periodic callbacks run inside spin().
class Bus {
 public:
  using LogSink = std::function<void(std::string_view json_line)>;

  explicit Bus(BusMode mode = BusMode::stepped);
  Bus(const Bus&) = delete;
  Bus& operator=(const Bus&) = delete;
  ~Bus();

  BusMode mode() const noexcept { return mode_; }
  Timestamp now() const;

  /// Registers `name` with payload kind T. Re-advertising with the same kind
  /// returns the existing topic; a different kind throws KindMismatchError.
  template <class T>
  Topic<T> advertise(std::string name) {
    register_topic(name, kind_of<T>());
    return Topic<T>{std::move(name)};
  }
  void register_topic(const std::string& name, MessageKind kind);
  bool has_topic(std::string_view name) const;
  MessageKind topic_kind(std::string_view name) const;

  template <class T>
  std::size_t publish(const Topic<T>& topic, T msg) {
    return publish(topic.name, Message{std::move(msg)});
  }
  /// Returns the number of subscribers the message is (or will be) delivered to.
  std::size_t publish(std::string_view topic, Message msg);

  template <class T>
  SubscriptionId subscribe(const Topic<T>& topic, std::function<void(const T&)> handler) {
    return subscribe_raw(topic.name, kind_of<T>(),
                         [h = std::move(handler)](const Message& m) { h(std::get<T>(m)); });
  }
  SubscriptionId subscribe_raw(std::string_view topic, MessageKind kind,
                               std::function<void(const Message&)> handler);
  void unsubscribe(SubscriptionId id);
  std::size_t subscriber_count(std::string_view topic) const;

  /// First call is due one period after registration.
  PeriodicId add_periodic(std::int64_t period_ns, std::function<void()> fn);
  void remove_periodic(PeriodicId id);

  /// Stepped mode only. Returns periodic firings plus handler invocations.
  std::size_t step(std::int64_t dt_ns);

  /// Live mode only. Fires periodic callbacks against the wall clock until
  /// the stop token is triggered or `max_duration` elapses.
  void spin(std::stop_token stop,
            std::chrono::nanoseconds max_duration = std::chrono::nanoseconds::max());

  /// One JSON object per dispatched message:
  /// {"t":nanos,"topic":..,"kind":..,"subscribers":n,"payload":{..}}.
  /// Image payloads are logged by SHA-256 digest.
  void set_log_sink(LogSink sink);

 private:
  struct Subscription {
    SubscriptionId id;
    std::function<void(const Message&)> handler;
    std::recursive_mutex mutex;
    bool active = true;
  };
  struct TopicEntry {
    std::string name;
    MessageKind kind;
    std::size_t order;
    std::vector<std::shared_ptr<Subscription>> subscribers;
    std::deque<std::shared_ptr<const Message>> queue;
  };
  struct Periodic {
    PeriodicId id;
    std::int64_t period_ns;
    std::int64_t next_due_ns;
    std::function<void()> fn;
  };

  TopicEntry& find_topic(std::string_view name);
  const TopicEntry& find_topic(std::string_view name) const;
  std::size_t dispatch(const TopicEntry& topic,
                       const std::vector<std::shared_ptr<Subscription>>& subs,
                       const std::shared_ptr<const Message>& msg);
  void log_dispatch(const std::string& topic, std::size_t subscribers, const Message& msg);

  BusMode mode_;
  std::chrono::steady_clock::time_point live_epoch_;
  std::int64_t virtual_now_ns_ = 0;

  mutable std::shared_mutex topics_mutex_;
  std::map<std::string, std::unique_ptr<TopicEntry>, std::less<>> topics_;
  std::vector<TopicEntry*> topic_order_;
  std::map<SubscriptionId, std::string> subscription_topic_;
  SubscriptionId next_subscription_ = 1;

  std::mutex periodic_mutex_;
  std::vector<Periodic> periodics_;
  PeriodicId next_periodic_ = 1;

  std::mutex log_mutex_;
  LogSink log_sink_;
  bool stepping_ = false;
};

/// JSON rendering of a payload, as written to the message log.
std::string payload_json(const Message& msg);

}  // namespace teacar
