#pragma once

// Enumerable synthetic world: images are tuples of attribute values, tasks are
// ordered pairs of distinct attributes, and the answer to a task is the pair of
// attribute values on the image.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace edl {

using TargetVector = std::vector<double>;

struct AttributeValue {
  int kind = 0;         // attribute index (0=shape, 1=color, 2=style)
  int value_index = 0;  // index within the attribute
  int global_index = 0; // kind * values_per_attribute + value_index

  friend bool operator==(const AttributeValue&, const AttributeValue&) = default;
};

struct SynthImage {
  int id = 0;
  std::vector<int> values;  // one value index per attribute

  friend bool operator==(const SynthImage&, const SynthImage&) = default;
};

struct TaskSpec {
  int id = 0;
  int first = 0;
  int second = 0;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct Instance {
  SynthImage image;
  TaskSpec task;
  int id = 0;  // image.id * num_tasks + task.id

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct PredictionPair {
  AttributeValue first_value;
  AttributeValue second_value;
  int index = 0;  // first.global_index * num_values_total + second.global_index

  friend bool operator==(const PredictionPair&, const PredictionPair&) = default;
};

/// The synthetic universe. Sizes default to 3 attributes with 4 values each.
class World {
 public:
  static constexpr int kDefaultAttributes = 3;
  static constexpr int kDefaultValues = 4;

  World(int attributes = kDefaultAttributes, int values = kDefaultValues);

  int num_attributes() const { return attributes_; }
  int values_per_attribute() const { return values_; }
  int num_values_total() const { return attributes_ * values_; }
  int num_images() const { return static_cast<int>(images_.size()); }
  int num_tasks() const { return static_cast<int>(tasks_.size()); }
  int num_instances() const { return num_images() * num_tasks(); }
  int num_prediction_pairs() const {
    return num_values_total() * num_values_total();
  }
  int target_dim() const { return num_values_total(); }

  const std::vector<SynthImage>& images() const { return images_; }
  const std::vector<TaskSpec>& tasks() const { return tasks_; }

  /// Canonical mixed-radix order, attribute 0 most significant.
  std::vector<SynthImage> enumerate_images() const { return images_; }
  /// Image-major: instance id = image.id * num_tasks + task.id.
  std::vector<Instance> enumerate_instances() const;

  const SynthImage& image(int id) const;
  const TaskSpec& task(int id) const;
  Instance instance(int id) const;
  Instance instance(int image_id, int task_id) const;
  SynthImage image_from_values(const std::vector<int>& values) const;

  AttributeValue value(int kind, int value_index) const;
  AttributeValue value_from_global(int global_index) const;
  PredictionPair pair(const AttributeValue& first,
                      const AttributeValue& second) const;
  PredictionPair pair_from_index(int index) const;
  /// The unique pair that check_prediction accepts for the instance.
  PredictionPair correct_pair(const Instance& instance) const;

  TargetVector target_vector(const SynthImage& image) const;
  bool check_prediction(const Instance& instance,
                        const PredictionPair& pair) const;

  std::string attribute_name(int kind) const;
  std::string value_name(const AttributeValue& value) const;
  /// Accepts a value label (case-insensitive) or a global index.
  AttributeValue parse_value(std::string_view text) const;

 private:
  int attributes_;
  int values_;
  std::vector<SynthImage> images_;
  std::vector<TaskSpec> tasks_;
};

}  // namespace edl
