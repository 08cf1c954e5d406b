#include "edl/world.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <stdexcept>

namespace edl {
namespace {

constexpr std::array<std::string_view, 3> kAttributeNames = {"shape", "color",
                                                              "style"};
constexpr std::array<std::array<std::string_view, 4>, 3> kValueNames = {{
    {"square", "triangle", "circle", "star"},
    {"purple", "green", "blue", "red"},
    {"filled", "dotted", "dashed", "solid"},
}};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

World::World(int attributes, int values)
    : attributes_(attributes), values_(values) {
  if (attributes < 2 || attributes > 6) {
    throw std::invalid_argument("world: attribute count must be in [2, 6]");
  }
  if (values < 2 || values > 8) {
    throw std::invalid_argument("world: values per attribute must be in [2, 8]");
  }
  int count = 1;
  for (int k = 0; k < attributes_; ++k) count *= values_;
  images_.reserve(count);
  for (int id = 0; id < count; ++id) {
    SynthImage img;
    img.id = id;
    img.values.assign(attributes_, 0);
    int rest = id;
    for (int k = attributes_ - 1; k >= 0; --k) {
      img.values[k] = rest % values_;
      rest /= values_;
    }
    images_.push_back(std::move(img));
  }
  for (int a = 0; a < attributes_; ++a) {
    for (int b = 0; b < attributes_; ++b) {
      if (a == b) continue;
      tasks_.push_back(TaskSpec{static_cast<int>(tasks_.size()), a, b});
    }
  }
}

std::vector<Instance> World::enumerate_instances() const {
  std::vector<Instance> out;
  out.reserve(num_instances());
  for (const auto& img : images_) {
    for (const auto& task : tasks_) {
      out.push_back(Instance{img, task, img.id * num_tasks() + task.id});
    }
  }
  return out;
}

const SynthImage& World::image(int id) const {
  if (id < 0 || id >= num_images()) {
    throw std::out_of_range("world: image id out of range");
  }
  return images_[id];
}

const TaskSpec& World::task(int id) const {
  if (id < 0 || id >= num_tasks()) {
    throw std::out_of_range("world: task id out of range");
  }
  return tasks_[id];
}

Instance World::instance(int id) const {
  if (id < 0 || id >= num_instances()) {
    throw std::out_of_range("world: instance id out of range");
  }
  return instance(id / num_tasks(), id % num_tasks());
}

Instance World::instance(int image_id, int task_id) const {
  return Instance{image(image_id), task(task_id),
                  image_id * num_tasks() + task_id};
}

SynthImage World::image_from_values(const std::vector<int>& values) const {
  if (static_cast<int>(values.size()) != attributes_) {
    throw std::invalid_argument("world: wrong number of attribute values");
  }
  int id = 0;
  for (int v : values) {
    if (v < 0 || v >= values_) {
      throw std::out_of_range("world: attribute value out of range");
    }
    id = id * values_ + v;
  }
  return images_[id];
}

AttributeValue World::value(int kind, int value_index) const {
  if (kind < 0 || kind >= attributes_ || value_index < 0 ||
      value_index >= values_) {
    throw std::out_of_range("world: attribute value out of range");
  }
  return AttributeValue{kind, value_index, kind * values_ + value_index};
}

AttributeValue World::value_from_global(int global_index) const {
  if (global_index < 0 || global_index >= num_values_total()) {
    throw std::out_of_range("world: global value index out of range");
  }
  return value(global_index / values_, global_index % values_);
}

PredictionPair World::pair(const AttributeValue& first,
                           const AttributeValue& second) const {
  return PredictionPair{
      first, second,
      first.global_index * num_values_total() + second.global_index};
}

PredictionPair World::pair_from_index(int index) const {
  if (index < 0 || index >= num_prediction_pairs()) {
    throw std::out_of_range("world: prediction pair index out of range");
  }
  return pair(value_from_global(index / num_values_total()),
              value_from_global(index % num_values_total()));
}

PredictionPair World::correct_pair(const Instance& inst) const {
  return pair(value(inst.task.first, inst.image.values[inst.task.first]),
              value(inst.task.second, inst.image.values[inst.task.second]));
}

TargetVector World::target_vector(const SynthImage& img) const {
  TargetVector y(num_values_total(), 0.0);
  for (int k = 0; k < attributes_; ++k) y[k * values_ + img.values[k]] = 1.0;
  return y;
}

bool World::check_prediction(const Instance& inst,
                             const PredictionPair& p) const {
  const auto& v = inst.image.values;
  return p.first_value.kind == inst.task.first &&
         p.first_value.value_index == v[inst.task.first] &&
         p.second_value.kind == inst.task.second &&
         p.second_value.value_index == v[inst.task.second];
}

std::string World::attribute_name(int kind) const {
  if (kind < 0 || kind >= attributes_) {
    throw std::out_of_range("world: attribute out of range");
  }
  if (kind < static_cast<int>(kAttributeNames.size())) {
    return std::string(kAttributeNames[kind]);
  }
  return "attr" + std::to_string(kind);
}

std::string World::value_name(const AttributeValue& v) const {
  if (v.kind < static_cast<int>(kValueNames.size()) &&
      v.value_index < static_cast<int>(kValueNames[v.kind].size())) {
    return std::string(kValueNames[v.kind][v.value_index]);
  }
  return attribute_name(v.kind) + std::to_string(v.value_index);
}

AttributeValue World::parse_value(std::string_view text) const {
  int index = -1;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), index);
  if (ec == std::errc() && ptr == text.data() + text.size()) {
    return value_from_global(index);
  }
  const std::string needle = lower(text);
  for (int g = 0; g < num_values_total(); ++g) {
    const auto v = value_from_global(g);
    if (value_name(v) == needle) return v;
  }
  throw std::invalid_argument("unknown attribute value '" + std::string(text) +
                              "'");
}

}  // namespace edl
