#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "artemis/store.hpp"
#include "support/fixtures.hpp"
#include "support/records.hpp"
#include "support/temp_dir.hpp"

using namespace artemis;
using namespace artemis::testing;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

struct FaultOnce {
  explicit FaultOnce(std::string match) {
    write_fault_hook() = [this, match](const fs::path& temp, const fs::path& target) {
      if (!fired && target.string().find(match) != std::string::npos) {
        fired = true;
        seen_temp = temp;
        throw std::runtime_error("simulated crash");
      }
    };
  }
  ~FaultOnce() { write_fault_hook() = nullptr; }
  bool fired = false;
  fs::path seen_temp;
};

std::size_t count_files(const fs::path& dir) {
  if (!fs::exists(dir)) return 0;
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.is_regular_file() ? 1 : 0;
  return n;
}

AnnotationPatch patch(std::vector<std::uint32_t> faces, std::string title) {
  AnnotationPatch p;
  p.faces = std::move(faces);
  p.title = std::move(title);
  return p;
}

Timestamp at(long long ms) { return Timestamp{std::chrono::milliseconds(ms)}; }

// Clock that advances one second per call.
std::function<Timestamp()> stepping_clock(long long start_ms) {
  auto t = std::make_shared<long long>(start_ms);
  return [t] { return at((*t += 1000)); };
}

}  // namespace

TEST(Store, UploadIsContentAddressed) {
  TempDir dir;
  Store store(dir.path());
  const auto [entry, created] = store.upload_model(kCubeObj, std::nullopt, "cube.obj");
  EXPECT_TRUE(created);
  EXPECT_EQ(entry.face_count, 12u);
  EXPECT_EQ(entry.vertex_count, 8u);
  EXPECT_EQ(entry.model_id, sha256_hex(kCubeObj));
  EXPECT_EQ(entry.source_name, "cube.obj");
  EXPECT_EQ(entry.bounds.min, (Vec3{0, 0, 0}));
  EXPECT_EQ(entry.bounds.max, (Vec3{1, 1, 1}));

  const auto [again, created_again] = store.upload_model(kCubeObj, MeshFormat::obj, "other-name.obj");
  EXPECT_FALSE(created_again);
  EXPECT_EQ(again, entry);
  EXPECT_EQ(store.models().size(), 1u);
  EXPECT_EQ(count_files(dir / "models"), 2u);  // mesh + meta

  EXPECT_EQ(sha256_hex(store.mesh_bytes(entry.model_id)), entry.model_id);
  EXPECT_EQ(store.mesh(entry.model_id)->id, entry.model_id);
  EXPECT_EQ(store.model(entry.model_id), entry);
}

TEST(Store, UploadErrors) {
  TempDir dir;
  Store store(dir.path());
  try {
    store.upload_model("v 0 0 0\nv 1 0 0\nf 1 2 x\n", MeshFormat::obj, "bad.obj");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(store.models().empty());
  EXPECT_EQ(code_of([&] { store.model(std::string(64, 'a')); }), ErrorCode::UnknownModel);
  EXPECT_EQ(code_of([&] { store.model("../../etc"); }), ErrorCode::UnknownModel);
}

TEST(Store, BvhBuiltOnceUnderConcurrency) {
  TempDir dir;
  Store store(dir.path());
  const std::string id = store.upload_model(kCubeObj, std::nullopt, "cube.obj").first.model_id;
  EXPECT_EQ(store.bvh_builds(), 0u);
  std::vector<std::thread> threads;
  std::vector<const BVH*> seen(8);
  for (int i = 0; i < 8; ++i) threads.emplace_back([&, i] { seen[i] = store.bvh(id).get(); });
  for (auto& t : threads) t.join();
  EXPECT_EQ(store.bvh_builds(), 1u);
  for (const BVH* b : seen) EXPECT_EQ(b, seen[0]);
}

TEST(Store, AnnotationCrud) {
  TempDir dir;
  Store store(dir.path());
  store.clock = stepping_clock(1'700'000'000'000);
  const std::string id = store.upload_model(kCubeObj, std::nullopt, "cube.obj").first.model_id;

  const auto a = store.create_annotation(id, patch({3, 1}, "lid"));
  EXPECT_EQ(a.roi.faces, (std::vector<std::uint32_t>{1, 3}));
  EXPECT_EQ(a.color, kDefaultColor);
  EXPECT_EQ(store.annotations(id), std::vector<AnnotationRecord>{a});
  EXPECT_EQ(store.annotation(id, a.id), a);

  AnnotationPatch rename;
  rename.title = "lid (cracked)";
  const auto b = store.update_annotation(id, a.id, rename);
  EXPECT_EQ(b.id, a.id);
  EXPECT_EQ(b.created_at, a.created_at);
  EXPECT_GT(b.modified_at, a.modified_at);
  EXPECT_EQ(b.title, "lid (cracked)");
  EXPECT_EQ(b.roi, a.roi);

  EXPECT_TRUE(store.delete_annotation(id, a.id));
  EXPECT_FALSE(store.delete_annotation(id, a.id));
  EXPECT_TRUE(store.annotations(id).empty());
  EXPECT_EQ(code_of([&] { store.annotation(id, a.id); }), ErrorCode::NotFound);
  EXPECT_EQ(code_of([&] { store.update_annotation(id, a.id, rename); }), ErrorCode::NotFound);
  EXPECT_EQ(code_of([&] { store.create_annotation(id, patch({}, "empty")); }), ErrorCode::EmptyROI);
  EXPECT_EQ(code_of([&] { store.create_annotation(id, patch({12}, "oob")); }), ErrorCode::ValidationError);
  EXPECT_EQ(code_of([&] { store.create_annotation(std::string(64, '0'), patch({0}, "x")); }), ErrorCode::UnknownModel);
}

TEST(Store, ListSortedByCreation) {
  TempDir dir;
  Store store(dir.path());
  const std::string id = store.upload_model(kCubeObj, std::nullopt, "cube.obj").first.model_id;
  std::vector<std::string> ids;
  for (long long t : {5'000LL, 1'000LL, 3'000LL}) {
    store.clock = [t] { return at(t); };
    ids.push_back(store.create_annotation(id, patch({0}, std::to_string(t))).id);
  }
  const auto list = store.annotations(id);
  ASSERT_EQ(list.size(), 3u);
  EXPECT_EQ(list[0].title, "1000");
  EXPECT_EQ(list[1].title, "3000");
  EXPECT_EQ(list[2].title, "5000");
}

TEST(Store, SchemasPersistAndValidate) {
  TempDir dir;
  std::string id, aid;
  {
    Store store(dir.path());
    id = store.upload_model(kCubeObj, std::nullopt, "cube.obj").first.model_id;
    store.add_schema(site_schema());
    store.add_schema(site_schema());  // identical re-add is a no-op
    FieldSchema changed = site_schema();
    changed.entries.pop_back();
    EXPECT_EQ(code_of([&] { store.add_schema(changed); }), ErrorCode::IdConflict);
    FieldSchema bad = site_schema();
    bad.name = "../x";
    EXPECT_EQ(code_of([&] { store.add_schema(bad); }), ErrorCode::InvalidArgument);

    AnnotationPatch p = patch({0, 1}, "base");
    p.schema_name = "site";
    p.fields = FieldMap{{"material", "marble"}, {"found", "1901-02-03"}};
    aid = store.create_annotation(id, p).id;

    p.fields = FieldMap{{"material", "plastic"}};
    EXPECT_EQ(code_of([&] { store.create_annotation(id, p); }), ErrorCode::SchemaViolation);
    p.schema_name = "nope";
    EXPECT_EQ(code_of([&] { store.create_annotation(id, p); }), ErrorCode::UnknownSchema);

    AnnotationPatch u;
    u.fields = FieldMap{{"height_cm", "tall"}};
    EXPECT_EQ(code_of([&] { store.update_annotation(id, aid, u); }), ErrorCode::SchemaViolation);
  }
  Store reopened(dir.path());
  EXPECT_EQ(reopened.schemas().find("site", 2), site_schema());
  const auto r = reopened.annotation(id, aid);
  EXPECT_EQ(r.schema_name, "site");
  EXPECT_EQ(r.fields, (FieldMap{{"material", "marble"}, {"found", "1901-02-03"}}));
}

TEST(Store, ExportImportRoundTrip) {
  TempDir first, second;
  std::string id;
  std::string exported;
  std::vector<AnnotationRecord> originals;
  {
    Store store(first.path());
    store.add_schema(site_schema());
    id = store.upload_model(kCubeObj, std::nullopt, "cube.obj").first.model_id;
    EXPECT_EQ(canonical_text(store.export_annotations(id)), "[]\n");

    std::mt19937_64 rng(7);
    Json collection = Json::array();
    for (int i = 0; i < 5; ++i) {
      originals.push_back(random_record(rng, *store.mesh(id)));
      collection.push_back(to_wadm(originals.back()));
    }
    EXPECT_EQ(store.import_annotations(id, collection), 5u);
    exported = canonical_text(store.export_annotations(id));
    std::sort(originals.begin(), originals.end(), [](const auto& a, const auto& b) {
      return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id);
    });
    EXPECT_EQ(store.annotations(id), originals);
  }
  Store store(second.path());
  store.add_schema(site_schema());
  store.upload_model(kCubeObj, std::nullopt, "cube.obj");
  EXPECT_EQ(store.import_annotations(id, Json::parse(exported)), 5u);
  EXPECT_EQ(store.annotations(id), originals);
  EXPECT_EQ(canonical_text(store.export_annotations(id)), exported);
  EXPECT_TRUE(store.invalid_annotation_files().empty());
}

TEST(Store, ImportRejectsBadDocuments) {
  TempDir dir;
  Store store(dir.path());
  store.clock = stepping_clock(1'700'000'000'000);
  const std::string id = store.upload_model(kCubeObj, std::nullopt, "cube.obj").first.model_id;
  const auto existing = store.create_annotation(id, patch({0}, "kept"));

  auto mesh = *store.mesh(id);
  AnnotationInput in;
  in.roi = SelectionSet::from_faces(id, {1, 2});
  in.title = "ok";
  Json good = to_wadm(create_annotation(mesh, in, empty_schema(), at(1)));
  Json oob = to_wadm(create_annotation(mesh, in, empty_schema(), at(2)));
  oob["target"]["selector"]["faces"] = Json::array({1, 12});
  Json other_model = to_wadm(create_annotation(mesh, in, empty_schema(), at(3)));
  other_model["target"]["source"] = std::string(kModelUriPrefix) + std::string(64, 'b');
  Json wrong_vertices = to_wadm(create_annotation(mesh, in, empty_schema(), at(4)));
  wrong_vertices["target"]["selector"]["vertices"] = Json::array({0});

  try {
    store.import_annotations(id, Json::array({good, oob, other_model, wrong_vertices, Json("junk")}));
    FAIL();
  } catch (const ImportRejected& e) {
    EXPECT_EQ(e.code(), ErrorCode::ValidationError);
    std::map<std::size_t, std::string> by_doc;
    for (const auto& v : e.violations()) by_doc[v.document] = v.path;
    EXPECT_EQ(by_doc.count(0), 0u);
    EXPECT_EQ(by_doc[1], "$.target.selector.faces");
    EXPECT_EQ(by_doc[2], "$.target.source");
    EXPECT_EQ(by_doc[3], "$.target.selector.vertices");
    EXPECT_EQ(by_doc[4], "$");
    EXPECT_EQ(e.to_json()[0]["document"], 1);
  }
  // Nothing written when any document fails.
  EXPECT_EQ(store.annotations(id).size(), 1u);

  EXPECT_EQ(code_of([&] { store.import_annotations(id, Json::array({to_wadm(existing)})); }), ErrorCode::IdConflict);
  AnnotationRecord changed = existing;
  changed.title = "replaced";
  EXPECT_EQ(store.import_annotations(id, Json::array({to_wadm(changed)}), true), 1u);
  EXPECT_EQ(store.annotation(id, existing.id).title, "replaced");
  EXPECT_EQ(code_of([&] { store.import_annotations(id, Json::array({good, good})); }), ErrorCode::ValidationError);
  EXPECT_EQ(code_of([&] { store.import_annotations(id, Json::object()); }), ErrorCode::ValidationError);
}

TEST(Store, InterruptedWritesLeaveOnlyCompleteDocuments) {
  TempDir dir;
  std::string id, aid;
  {
    Store store(dir.path());
    store.clock = stepping_clock(1'700'000'000'000);
    {
      FaultOnce fault("meta.json");
      EXPECT_THROW(store.upload_model(kCubeObj, std::nullopt, "cube.obj"), std::runtime_error);
      EXPECT_TRUE(fault.fired);
      EXPECT_TRUE(fs::exists(fault.seen_temp));
    }
    EXPECT_TRUE(store.models().empty());
    id = store.upload_model(kCubeObj, std::nullopt, "cube.obj").first.model_id;
    aid = store.create_annotation(id, patch({0, 1}, "original")).id;
    {
      FaultOnce fault(".jsonld");
      EXPECT_THROW(store.create_annotation(id, patch({2}, "lost")), std::runtime_error);
      AnnotationPatch p;
      p.title = "second try";
      fault.fired = false;
      EXPECT_THROW(store.update_annotation(id, aid, p), std::runtime_error);
    }
    const auto list = store.annotations(id);
    ASSERT_EQ(list.size(), 1u);
    EXPECT_EQ(list[0].title, "original");
    EXPECT_TRUE(store.invalid_annotation_files().empty());
  }
  std::size_t temps = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path())) {
    temps += is_temp_name(e.path().filename().string()) ? 1 : 0;
  }
  EXPECT_GE(temps, 3u);

  Store reopened(dir.path());
  for (const auto& e : fs::recursive_directory_iterator(dir.path())) {
    EXPECT_FALSE(is_temp_name(e.path().filename().string())) << e.path();
  }
  ASSERT_EQ(reopened.annotations(id).size(), 1u);
  EXPECT_EQ(reopened.annotations(id)[0].title, "original");
  EXPECT_TRUE(reopened.invalid_annotation_files().empty());
}

TEST(Store, RestartYieldsSameState) {
  TempDir dir;
  std::string id, listing, exported;
  {
    Store store(dir.path());
    store.clock = stepping_clock(1'700'000'000'000);
    id = store.upload_model(kCubeObj, std::nullopt, "cube.obj").first.model_id;
    store.create_annotation(id, patch({0, 5}, "a"));
    store.create_annotation(id, patch({7}, "b"));
    exported = canonical_text(store.export_annotations(id));
    listing = canonical_text(to_json(store.models()[0]));
  }
  Store store(dir.path());
  EXPECT_EQ(canonical_text(store.export_annotations(id)), exported);
  EXPECT_EQ(canonical_text(to_json(store.models()[0])), listing);
}

TEST(Store, DetectCachesResponse) {
  TempDir dir;
  Store store(dir.path());
  const auto plane = export_obj(grid_plane(8));
  const std::string id = store.upload_model(plane, MeshFormat::obj, "plane.obj").first.model_id;

  const std::string first = store.detect(id, "builtin:saliency");
  const Json j = Json::parse(first);
  EXPECT_EQ(j["detector"], "saliency");
  EXPECT_EQ(j["mesh_id"], id);
  EXPECT_TRUE(j["normalized"].get<bool>());
  EXPECT_EQ(j["values"].size(), store.mesh(id)->vertex_count());
  for (const auto& v : j["values"]) EXPECT_EQ(v.get<double>(), 0.0);
  EXPECT_EQ(j["stats"]["max"], 0.0);
  EXPECT_TRUE(fs::exists(dir / ("models/" + id + "/heatmaps/saliency.json")));

  // A tampered cache file shows the cached bytes are served verbatim.
  atomic_write(dir / ("models/" + id + "/heatmaps/saliency.json"), "{\"cached\":true}\n");
  EXPECT_EQ(store.detect(id, "saliency"), "{\"cached\":true}\n");
  EXPECT_EQ(store.detect(id, "saliency", true), first);
  EXPECT_EQ(store.detect(id, "saliency"), first);

  EXPECT_EQ(code_of([&] { store.detect(id, "nope"); }), ErrorCode::DetectorUnknown);
  EXPECT_EQ(code_of([&] { store.detect(std::string(64, 'c'), "saliency"); }), ErrorCode::UnknownModel);
}

TEST(Store, DetectorRegistryPersists) {
  TempDir dir;
  {
    Store store(dir.path());
    store.register_detector({"cracks", "http://127.0.0.1:9/detect"});
    EXPECT_EQ(code_of([&] { store.register_detector({"cracks", "http://127.0.0.1:9/x"}); }), ErrorCode::IdConflict);
  }
  Store store(dir.path());
  ASSERT_TRUE(store.detectors().find("cracks"));
  EXPECT_EQ(store.detectors().find("cracks")->endpoint, "http://127.0.0.1:9/detect");
}

TEST(Report, EmptyModel) {
  TempDir dir;
  Store store(dir.path());
  const std::string id = store.upload_model(kCubeObj, std::nullopt, "cube.obj").first.model_id;
  const std::string html = store.report(id, at(0));
  EXPECT_NE(html.find("No annotations."), std::string::npos);
  EXPECT_NE(html.find(id), std::string::npos);
  EXPECT_NE(html.find("<th>Faces</th><td>12</td>"), std::string::npos);
  EXPECT_NE(html.find("<th>Total surface area</th><td>6.000000</td>"), std::string::npos);
  EXPECT_NE(html.find("Generated 1970-01-01T00:00:00.000Z"), std::string::npos);
  EXPECT_EQ(html.find("class=\"annotation\""), std::string::npos);
  EXPECT_EQ(code_of([&] { store.report(std::string(64, 'e'), at(0)); }), ErrorCode::UnknownModel);
}

TEST(Report, SectionsInCreationOrder) {
  TempDir dir;
  Store store(dir.path());
  store.add_schema(site_schema());
  const std::string id = store.upload_model(kCubeObj, std::nullopt, "cube.obj").first.model_id;
  const char* titles[] = {"third", "first", "second"};
  const long long times[] = {3'000, 1'000, 2'000};
  for (int i = 0; i < 3; ++i) {
    store.clock = [t = times[i]] { return at(t); };
    AnnotationPatch p = patch({static_cast<std::uint32_t>(i)}, titles[i]);
    p.description = "<b>&";
    p.schema_name = "site";
    p.fields = FieldMap{{"notes", "v<1>"}};
    store.create_annotation(id, p);
  }
  const std::string html = store.report(id, at(42));
  std::size_t sections = 0;
  for (std::size_t pos = 0; (pos = html.find("<section class=\"annotation\"", pos)) != std::string::npos; ++pos) {
    ++sections;
  }
  EXPECT_EQ(sections, 3u);
  const auto p1 = html.find("1. first"), p2 = html.find("2. second"), p3 = html.find("3. third");
  ASSERT_NE(p1, std::string::npos);
  EXPECT_LT(p1, p2);
  EXPECT_LT(p2, p3);
  EXPECT_NE(html.find("&lt;b&gt;&amp;"), std::string::npos);
  EXPECT_NE(html.find("<th>notes</th><td>v&lt;1&gt;</td>"), std::string::npos);
  EXPECT_EQ(html.find("<b>&"), std::string::npos);
  EXPECT_EQ(html, store.report(id, at(42)));
}

TEST(Report, FullCubeRegionArea) {
  TempDir dir;
  Store store(dir.path());
  const std::string id = store.upload_model(kCubeObj, std::nullopt, "cube.obj").first.model_id;
  std::vector<std::uint32_t> all(12);
  std::iota(all.begin(), all.end(), 0u);
  AnnotationPatch p = patch(all, "whole");
  p.color = Color{1, 2, 255};
  store.create_annotation(id, p);
  const std::string html = store.report(id, at(0));
  const std::string label = "<th>Region surface area</th><td>";
  const auto pos = html.find(label);
  ASSERT_NE(pos, std::string::npos);
  EXPECT_NEAR(std::stod(html.substr(pos + label.size())), 6.0, 1e-6);
  EXPECT_NE(html.find("background:#0102ff"), std::string::npos);
}

TEST(Payload, AnnotationPatchParsing) {
  const auto p = annotation_patch_from_json(Json::parse(
      R"({"faces":[4,2],"title":"t","color":"#A0b1C2","fields":{"n":3.5,"s":"x"},"schema":{"name":"site","version":2}})"));
  EXPECT_EQ(*p.faces, (std::vector<std::uint32_t>{4, 2}));
  EXPECT_EQ(*p.color, (Color{0xa0, 0xb1, 0xc2}));
  EXPECT_EQ(*p.fields, (FieldMap{{"n", "3.5"}, {"s", "x"}}));
  EXPECT_EQ(*p.schema_name, "site");
  EXPECT_EQ(*p.schema_version, 2);
  EXPECT_FALSE(p.description);
  EXPECT_EQ(parse_color(Json::parse("[1,2,3]"), "$"), (Color{1, 2, 3}));
  EXPECT_EQ(parse_color(Json::parse(R"({"r":9,"g":8,"b":7})"), "$"), (Color{9, 8, 7}));
  for (const char* bad : {R"("#12345")", R"("#12345g")", R"("# 12345")", "[1,2,256]", "[1,2]", "7"}) {
    EXPECT_EQ(code_of([&] { parse_color(Json::parse(bad), "$"); }), ErrorCode::ValidationError) << bad;
  }
  for (const char* bad : {"[]", R"({"faces":[-1]})", R"({"faces":"1"})", R"({"title":3})", R"({"fields":{"a":[1]}})"}) {
    EXPECT_EQ(code_of([&] { annotation_patch_from_json(Json::parse(bad)); }), ErrorCode::ValidationError) << bad;
  }
}
