#include "doctest.h"

#include <cmath>
#include <set>
#include <stdexcept>

#include "edl/world.hpp"

using namespace edl;

TEST_SUITE("world") {

TEST_CASE("enumeration sizes and canonical order") {
  const World w;
  const auto images = w.enumerate_images();
  REQUIRE(images.size() == 64);
  CHECK(images.front().values == std::vector<int>{0, 0, 0});
  CHECK(images.front().id == 0);
  CHECK(images.back().values == std::vector<int>{3, 3, 3});
  CHECK(images.back().id == 63);
  std::set<std::vector<int>> distinct;
  for (int i = 0; i < 64; ++i) {
    CHECK(images[i].id == i);
    distinct.insert(images[i].values);
  }
  CHECK(distinct.size() == 64);

  const auto inst = w.enumerate_instances();
  REQUIRE(inst.size() == 384);
  CHECK(inst[0].image.id == 0);
  CHECK(inst[0].task.id == 0);
  std::set<std::pair<int, int>> pairs;
  for (const auto& i : inst) {
    pairs.insert({i.image.id, i.task.id});
    CHECK(i.id == i.image.id * 6 + i.task.id);
  }
  CHECK(pairs.size() == 384);
  CHECK(w.num_tasks() == 6);
  CHECK(w.num_prediction_pairs() == 144);
}

TEST_CASE("tasks are ordered pairs of distinct attributes") {
  const World w;
  std::set<std::pair<int, int>> seen;
  for (const auto& t : w.tasks()) {
    CHECK(t.first != t.second);
    seen.insert({t.first, t.second});
  }
  CHECK(seen.size() == 6);
}

TEST_CASE("target vectors") {
  const World w;
  const auto y = w.target_vector(w.image_from_values({0, 0, 0}));
  REQUIRE(y.size() == 12);
  for (int i = 0; i < 12; ++i) CHECK(y[i] == ((i == 0 || i == 4 || i == 8) ? 1.0 : 0.0));

  std::set<std::vector<double>> vectors;
  for (const auto& a : w.images()) {
    const auto ya = w.target_vector(a);
    double norm = 0.0;
    for (double v : ya) norm += v * v;
    CHECK(norm == 3.0);
    vectors.insert(ya);
    for (const auto& b : w.images()) {
      if (a.id == b.id) continue;
      const auto yb = w.target_vector(b);
      double d = 0.0;
      for (int i = 0; i < 12; ++i) d += (ya[i] - yb[i]) * (ya[i] - yb[i]);
      int differing = 0;
      for (int k = 0; k < 3; ++k) differing += a.values[k] != b.values[k];
      CHECK(d == 2.0 * differing);
      CHECK((d == 2.0 || d == 4.0 || d == 6.0));
    }
  }
  CHECK(vectors.size() == 64);
}

TEST_CASE("check_prediction is order sensitive and has one solution") {
  const World w;
  // purple (color 0), square (shape 0), filled (style 0); task (shape, color)
  const SynthImage img = w.image_from_values({0, 0, 0});
  int shape_color = -1;
  for (const auto& t : w.tasks()) {
    if (t.first == 0 && t.second == 1) shape_color = t.id;
  }
  REQUIRE(shape_color >= 0);
  const Instance inst = w.instance(img.id, shape_color);
  const auto square = w.parse_value("square");
  const auto purple = w.parse_value("purple");
  CHECK(w.check_prediction(inst, w.pair(square, purple)));
  CHECK_FALSE(w.check_prediction(inst, w.pair(purple, square)));

  for (const auto& i : w.enumerate_instances()) {
    int correct = 0;
    for (int p = 0; p < w.num_prediction_pairs(); ++p) {
      correct += w.check_prediction(i, w.pair_from_index(p));
    }
    CHECK(correct == 1);
    CHECK(w.check_prediction(i, w.correct_pair(i)));
  }
}

TEST_CASE("two one-symbol answers cannot name an image") {
  const World w;
  const int answer_sequences = static_cast<int>(std::pow(4, 2));
  CHECK(answer_sequences == 16);
  CHECK(answer_sequences < w.num_images());
}

TEST_CASE("value labels") {
  const World w;
  CHECK(w.attribute_name(0) == "shape");
  CHECK(w.attribute_name(1) == "color");
  CHECK(w.attribute_name(2) == "style");
  CHECK(w.value_name(w.value(1, 0)) == "purple");
  CHECK(w.parse_value("Green").kind == 1);
  CHECK(w.parse_value("4").global_index == 4);
  CHECK_THROWS_AS(w.parse_value("octagon"), std::invalid_argument);
}

}
