#include "teacar/bus.hpp"

#include <algorithm>
#include <condition_variable>
#include <nlohmann/json.hpp>
#include <thread>

#include "teacar/digest.hpp"

namespace teacar {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::size_t kMaxDrainRounds = 10'000;

struct PayloadJson {
  ojson operator()(const MotionCmd& m) const {
    return {{"stamp", m.header.stamp.nanos}, {"source", m.source}, {"value", m.value}};
  }
  ojson operator()(const JoyMsg& m) const {
    return {{"stamp", m.header.stamp.nanos}, {"axes", m.axes}, {"buttons", m.buttons}};
  }
  ojson operator()(const ImageMsg& m) const {
    return {{"stamp", m.header.stamp.nanos},
            {"height", ImageMsg::kHeight},
            {"width", ImageMsg::kWidth},
            {"sha256", sha256_hex(std::span(m.data()))}};
  }
  ojson operator()(const ImuMsg& m) const {
    return {{"stamp", m.header.stamp.nanos}, {"accel", m.accel}, {"gyro", m.gyro}};
  }
  ojson operator()(const PwmChannelCmd& m) const {
    return {{"stamp", m.header.stamp.nanos},
            {"channel", m.channel},
            {"pulse_width_us", m.pulse_width_us}};
  }
};

}  // namespace

std::string payload_json(const Message& msg) { return std::visit(PayloadJson{}, msg).dump(); }

Bus::Bus(BusMode mode) : mode_(mode), live_epoch_(std::chrono::steady_clock::now()) {}

Bus::~Bus() = default;

Timestamp Bus::now() const {
  if (mode_ == BusMode::stepped) {
    return Timestamp{virtual_now_ns_};
  }
  const auto elapsed = std::chrono::steady_clock::now() - live_epoch_;
  return Timestamp{std::chrono::duration_cast<std::chrono::nanoseconds>(elapsed).count()};
}

void Bus::register_topic(const std::string& name, MessageKind kind) {
  if (name.empty()) {
    throw ValidationError("topic name must be non-empty");
  }
  std::unique_lock lock(topics_mutex_);
  if (auto it = topics_.find(name); it != topics_.end()) {
    if (it->second->kind != kind) {
      throw KindMismatchError("topic '" + name + "' already carries " +
                              std::string(to_string(it->second->kind)) + ", not " +
                              std::string(to_string(kind)));
    }
    return;
  }
  auto entry = std::make_unique<TopicEntry>();
  entry->name = name;
  entry->kind = kind;
  entry->order = topic_order_.size();
  topic_order_.push_back(entry.get());
  topics_.emplace(name, std::move(entry));
}

bool Bus::has_topic(std::string_view name) const {
  std::shared_lock lock(topics_mutex_);
  return topics_.find(name) != topics_.end();
}

Bus::TopicEntry& Bus::find_topic(std::string_view name) {
  auto it = topics_.find(name);
  if (it == topics_.end()) {
    throw NotFoundError("topic '" + std::string(name) + "' is not registered");
  }
  return *it->second;
}

const Bus::TopicEntry& Bus::find_topic(std::string_view name) const {
  auto it = topics_.find(name);
  if (it == topics_.end()) {
    throw NotFoundError("topic '" + std::string(name) + "' is not registered");
  }
  return *it->second;
}

MessageKind Bus::topic_kind(std::string_view name) const {
  std::shared_lock lock(topics_mutex_);
  return find_topic(name).kind;
}

std::size_t Bus::subscriber_count(std::string_view name) const {
  std::shared_lock lock(topics_mutex_);
  return find_topic(name).subscribers.size();
}

std::size_t Bus::publish(std::string_view name, Message msg) {
  validate(msg);
  auto shared = std::make_shared<const Message>(std::move(msg));

  if (mode_ == BusMode::stepped) {
    std::unique_lock lock(topics_mutex_);
    TopicEntry& topic = find_topic(name);
    if (kind_of(*shared) != topic.kind) {
      throw KindMismatchError("cannot publish " + std::string(to_string(kind_of(*shared))) +
                              " on '" + topic.name + "' (" + std::string(to_string(topic.kind)) +
                              ")");
    }
    const std::size_t n = topic.subscribers.size();
    if (n > 0) {
      topic.queue.push_back(std::move(shared));
    }
    return n;
  }

  std::vector<std::shared_ptr<Subscription>> subs;
  const TopicEntry* topic = nullptr;
  {
    std::shared_lock lock(topics_mutex_);
    topic = &find_topic(name);
    if (kind_of(*shared) != topic->kind) {
      throw KindMismatchError("cannot publish " + std::string(to_string(kind_of(*shared))) +
                              " on '" + topic->name + "' (" + std::string(to_string(topic->kind)) +
                              ")");
    }
    subs = topic->subscribers;
  }
  if (subs.empty()) {
    return 0;
  }
  return dispatch(*topic, subs, shared);
}

SubscriptionId Bus::subscribe_raw(std::string_view name, MessageKind kind,
                                  std::function<void(const Message&)> handler) {
  std::unique_lock lock(topics_mutex_);
  TopicEntry& topic = find_topic(name);
  if (topic.kind != kind) {
    throw KindMismatchError("cannot subscribe to '" + topic.name + "' as " +
                            std::string(to_string(kind)));
  }
  auto sub = std::make_shared<Subscription>();
  sub->id = next_subscription_++;
  sub->handler = std::move(handler);
  topic.subscribers.push_back(sub);
  subscription_topic_.emplace(sub->id, topic.name);
  return sub->id;
}

void Bus::unsubscribe(SubscriptionId id) {
  std::shared_ptr<Subscription> removed;
  {
    std::unique_lock lock(topics_mutex_);
    auto it = subscription_topic_.find(id);
    if (it == subscription_topic_.end()) {
      return;
    }
    TopicEntry& topic = find_topic(it->second);
    auto& subs = topic.subscribers;
    auto pos = std::find_if(subs.begin(), subs.end(), [id](const auto& s) { return s->id == id; });
    if (pos != subs.end()) {
      removed = *pos;
      subs.erase(pos);
    }
    subscription_topic_.erase(it);
  }
  if (removed) {
    std::lock_guard guard(removed->mutex);
    removed->active = false;
  }
}

std::size_t Bus::dispatch(const TopicEntry& topic,
                          const std::vector<std::shared_ptr<Subscription>>& subs,
                          const std::shared_ptr<const Message>& msg) {
  log_dispatch(topic.name, subs.size(), *msg);
  std::size_t delivered = 0;
  for (const auto& sub : subs) {
    std::lock_guard guard(sub->mutex);
    if (!sub->active) {
      continue;
    }
    sub->handler(*msg);
    ++delivered;
  }
  return delivered;
}

void Bus::log_dispatch(const std::string& topic, std::size_t subscribers, const Message& msg) {
  std::lock_guard guard(log_mutex_);
  if (!log_sink_) {
    return;
  }
  ojson line;
  line["t"] = now().nanos;
  line["topic"] = topic;
  line["kind"] = std::string(to_string(kind_of(msg)));
  line["subscribers"] = subscribers;
  line["payload"] = std::visit(PayloadJson{}, msg);
  log_sink_(line.dump());
}

void Bus::set_log_sink(LogSink sink) {
  std::lock_guard guard(log_mutex_);
  log_sink_ = std::move(sink);
}

PeriodicId Bus::add_periodic(std::int64_t period_ns, std::function<void()> fn) {
  if (period_ns <= 0) {
    throw ValidationError("periodic period must be > 0");
  }
  std::lock_guard guard(periodic_mutex_);
  const PeriodicId id = next_periodic_++;
  periodics_.push_back(Periodic{id, period_ns, now().nanos + period_ns, std::move(fn)});
  return id;
}

void Bus::remove_periodic(PeriodicId id) {
  std::lock_guard guard(periodic_mutex_);
  std::erase_if(periodics_, [id](const Periodic& p) { return p.id == id; });
}

std::size_t Bus::step(std::int64_t dt_ns) {
  if (mode_ != BusMode::stepped) {
    throw ModeError("step() requires stepped mode");
  }
  if (dt_ns <= 0) {
    throw ValidationError("step(): dt_ns must be > 0");
  }
  if (stepping_) {
    throw StateError("step() is not reentrant");
  }
  stepping_ = true;
  struct Reset {
    bool& flag;
    ~Reset() { flag = false; }
  } reset{stepping_};

  const std::int64_t target = virtual_now_ns_ + dt_ns;
  std::size_t events = 0;

  // Due periodics, earliest first; ties broken by registration order.
  for (;;) {
    std::function<void()> fn;
    {
      std::lock_guard guard(periodic_mutex_);
      Periodic* next = nullptr;
      for (auto& p : periodics_) {
        if (p.next_due_ns <= target && (next == nullptr || p.next_due_ns < next->next_due_ns)) {
          next = &p;
        }
      }
      if (next == nullptr) {
        break;
      }
      virtual_now_ns_ = std::max(virtual_now_ns_, next->next_due_ns);
      next->next_due_ns += next->period_ns;
      fn = next->fn;
    }
    fn();
    ++events;
  }
  virtual_now_ns_ = target;

  for (std::size_t round = 0;; ++round) {
    if (round == kMaxDrainRounds) {
      throw StateError("step(): message cascade did not settle");
    }
    std::vector<std::pair<TopicEntry*, std::deque<std::shared_ptr<const Message>>>> batch;
    {
      std::unique_lock lock(topics_mutex_);
      for (TopicEntry* t : topic_order_) {
        if (!t->queue.empty()) {
          batch.emplace_back(t, std::move(t->queue));
          t->queue.clear();
        }
      }
    }
    if (batch.empty()) {
      break;
    }
    for (auto& [topic, queue] : batch) {
      for (const auto& msg : queue) {
        std::vector<std::shared_ptr<Subscription>> subs;
        {
          std::shared_lock lock(topics_mutex_);
          subs = topic->subscribers;
        }
        events += dispatch(*topic, subs, msg);
      }
    }
  }
  return events;
}

void Bus::spin(std::stop_token stop, std::chrono::nanoseconds max_duration) {
  if (mode_ != BusMode::live) {
    throw ModeError("spin() requires live mode");
  }
  const auto start = std::chrono::steady_clock::now();
  const auto deadline = max_duration == std::chrono::nanoseconds::max()
                            ? std::chrono::steady_clock::time_point::max()
                            : start + max_duration;
  std::mutex wait_mutex;
  std::condition_variable_any wake;

  while (!stop.stop_requested() && std::chrono::steady_clock::now() < deadline) {
    std::function<void()> fn;
    std::int64_t next_due = std::numeric_limits<std::int64_t>::max();
    {
      std::lock_guard guard(periodic_mutex_);
      const std::int64_t t = now().nanos;
      Periodic* due = nullptr;
      for (auto& p : periodics_) {
        if (p.next_due_ns <= t && (due == nullptr || p.next_due_ns < due->next_due_ns)) {
          due = &p;
        }
        next_due = std::min(next_due, p.next_due_ns);
      }
      if (due != nullptr) {
        due->next_due_ns += due->period_ns;
        // Skip missed periods instead of bursting to catch up.
        if (due->next_due_ns < t) {
          due->next_due_ns = t + due->period_ns;
        }
        fn = due->fn;
      }
    }
    if (fn) {
      fn();
      continue;
    }
    auto wake_at = deadline;
    if (next_due != std::numeric_limits<std::int64_t>::max()) {
      wake_at = std::min(wake_at, live_epoch_ + std::chrono::nanoseconds(next_due));
    } else {
      wake_at = std::min(wake_at, std::chrono::steady_clock::now() + std::chrono::milliseconds(10));
    }
    std::unique_lock lock(wait_mutex);
    wake.wait_until(lock, stop, wake_at, [] { return false; });
  }
}

}  // namespace teacar
