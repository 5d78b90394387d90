#pragma once

#include <random>
#include <string>

#include "artemis/annotation.hpp"
#include "artemis/wadm.hpp"

namespace artemis::testing {

inline FieldSchema site_schema() {
  return FieldSchema{"site",
                     2,
                     {{"material", FieldKind::enumeration, {"marble", "limestone", "bronze"}},
                      {"height_cm", FieldKind::number, {}},
                      {"found", FieldKind::date, {}},
                      {"notes", FieldKind::text, {}}}};
}

inline SchemaRegistry test_registry() {
  SchemaRegistry reg;
  reg.add(site_schema());
  return reg;
}

// Text drawn from a pool that stresses XML escaping and UTF-8.
inline std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
  static const std::vector<std::string> kPieces = {
      "a", "Z", "0", " ", "<", ">", "&", "\"", "'", "\n", "\t", "\x01", "\x1f", "&amp;", "]]>",
      "\xc3\xa9", "\xce\xb1", "\xe2\x82\xac", "\xf0\x9f\x8f\x9b", "field", "<field key=\"x\">"};
  std::uniform_int_distribution<std::size_t> len(0, max_len), pick(0, kPieces.size() - 1);
  std::string out;
  for (std::size_t i = len(rng); i > 0; --i) out += kPieces[pick(rng)];
  return out;
}

inline AnnotationRecord random_record(std::mt19937_64& rng, const TriangleMesh& mesh) {
  std::uniform_int_distribution<int> byte(0, 255), coin(0, 1);
  std::uniform_int_distribution<std::uint32_t> face(0, static_cast<std::uint32_t>(mesh.face_count() - 1));
  std::vector<std::uint32_t> faces;
  const int n = 1 + static_cast<int>(rng() % 20);
  for (int i = 0; i < n; ++i) faces.push_back(face(rng));

  AnnotationInput in;
  in.roi = SelectionSet::from_faces(mesh.id, faces);
  in.title = random_text(rng, 6);
  in.color = {static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
              static_cast<std::uint8_t>(byte(rng))};
  in.description = random_text(rng, 12);
  in.creator = random_text(rng, 3);

  const bool use_schema = coin(rng) == 1;
  const FieldSchema schema = use_schema ? site_schema() : empty_schema();
  if (use_schema) {
    std::vector<std::pair<std::string, std::string>> pool = {
        {"material", std::vector<std::string>{"marble", "limestone", "bronze"}[rng() % 3]},
        {"height_cm", std::to_string(static_cast<int>(rng() % 400)) + ".5"},
        {"found", "19" + std::to_string(10 + rng() % 90) + "-0" + std::to_string(1 + rng() % 9) + "-1" +
                      std::to_string(rng() % 10)},
        {"notes", random_text(rng, 8)}};
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(rng() % (pool.size() + 1));
    in.fields = pool;
  }
  const Timestamp created{std::chrono::milliseconds(1'500'000'000'000LL + static_cast<long long>(rng() % 400'000'000'000LL))};
  AnnotationRecord r = create_annotation(mesh, in, schema, created);
  if (coin(rng)) r = touch(r, created + std::chrono::milliseconds(rng() % 1'000'000));
  if (coin(rng)) {
    r.extensions["motivation"] = "describing";
    r.extensions["x-rank"] = static_cast<int>(rng() % 10);
  }
  return r;
}

}  // namespace artemis::testing
