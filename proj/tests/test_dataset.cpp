#include <doctest.h>

#include "eegmatch/dataset.hpp"
#include "eegmatch/error.hpp"

#include <filesystem>
#include <random>

using namespace eegmatch;

namespace {

// Closed form: floor((L - 704) / 32) + 1 windows when L >= 704.
long expected_count(long frames) { return frames < 704 ? 0 : (frames - 704) / 32 + 1; }

// Stream whose value at (c, t) encodes the frame index for provenance checks.
TimeSeriesTensor ramp(Eigen::Index channels, long frames, double offset = 0.0) {
  Matrix m(channels, frames);
  for (Eigen::Index c = 0; c < channels; ++c)
    for (long t = 0; t < frames; ++t) m(c, t) = static_cast<double>(t) + 1e5 * c + offset;
  return TimeSeriesTensor(std::move(m), 64.0);
}

RecordingInput recording(const std::string& subject, long frames, double offset) {
  RecordingInput r;
  r.subject_id = subject;
  r.recording_id = subject + "_story";
  r.eeg = ramp(4, frames, offset);
  r.features["envelope"] = ramp(1, frames, offset + 0.5);
  r.features["bpc"] = ramp(6, frames + 3, offset + 0.25);
  return r;
}

}  // namespace

TEST_CASE("windowing spec") {
  const WindowingSpec spec;
  CHECK(spec.window_frames() == 320);
  CHECK(spec.hop_frames() == 32);
  CHECK(spec.gap_frames() == 64);
  CHECK(spec.mismatch_offset() == 384);
  CHECK(spec.span_frames() == 704);
  WindowingSpec bad;
  bad.overlap_frac = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("make_windows counts and offsets") {
  for (long L : {703L, 704L, 735L, 736L, 1000L, 10000L}) {
    const auto set = make_windows(ramp(2, L), ramp(3, L + 10), {}, "s", "r");
    CHECK(static_cast<long>(set.size()) == expected_count(L));
    for (size_t i = 0; i < set.size(); ++i) {
      const auto& t = set.triples[i];
      CHECK(t.start == 32 * static_cast<long>(i));
      CHECK(t.mismatch_start == t.start + 384);
      CHECK(t.a_is_match);
      CHECK(set.eeg(i)(0, 0) == static_cast<double>(t.start));
      CHECK(set.match(i)(0, 0) == static_cast<double>(t.start));
      CHECK(set.mismatch(i)(0, 0) == static_cast<double>(t.start + 384));
      CHECK(set.match(i).cols() == 320);
      CHECK(t.mismatch_start + 320 <= L);
    }
  }
  CHECK(make_windows(ramp(2, 704), ramp(1, 704)).triples.at(0).mismatch_start == 384);
  CHECK(make_windows(ramp(2, 736), ramp(1, 736)).size() == 2);
  CHECK(make_windows(ramp(2, 703), ramp(1, 703)).size() == 0);
  CHECK_THROWS_AS(make_windows(ramp(2, 800), TimeSeriesTensor(Matrix::Zero(1, 800), 128.0)), Error);
}

TEST_CASE("split_recording") {
  SUBCASE("arithmetic at L = 10000") {
    const auto r = split_recording(10000);
    CHECK(r.val.begin == 4000);
    CHECK(r.val.end == 5000);
    CHECK(r.test.begin == 5000);
    CHECK(r.test.end == 6000);
    REQUIRE(r.train.size() == 2);
    CHECK(r.train[0].begin == 0);
    CHECK(r.train[0].end == 4000);
    CHECK(r.train[1].begin == 6000);
    CHECK(r.train[1].end == 10000);
  }
  SUBCASE("train frame count is 0.8 L within one frame") {
    for (long L = 7040; L < 7400; L += 7) {
      const auto r = split_recording(L);
      const long train = r.train[0].size() + r.train[1].size();
      CHECK(std::abs(static_cast<double>(train) - 0.8 * L) <= 1.0);
      CHECK(r.train[0].size() + r.val.size() + r.test.size() + r.train[1].size() == L);
    }
  }
  SUBCASE("too short") {
    CHECK_THROWS_AS(split_recording(7039), Error);
    CHECK_NOTHROW(split_recording(7040));
  }
  SUBCASE("fractions must sum to one") {
    SplitSpec s;
    s.train_frac = 0.7;
    CHECK_THROWS_AS(split_recording(10000, s), Error);
  }
}

TEST_CASE("assemble_dataset") {
  const std::vector<RecordingInput> recs = {recording("s01", 12000, 0.0),
                                            recording("s02", 9001, 1e7)};
  const auto data = assemble_dataset(recs, "env", {}, {}, {.seed = 7});

  SUBCASE("no triple crosses a partition boundary (brute-force scan)") {
    for (auto p : {Partition::Train, Partition::Val, Partition::Test}) {
      const auto& set = data.get(p);
      for (size_t i = 0; i < set.size(); ++i) {
        const auto& t = set.triples[i];
        const long L = set.source_of(i).eeg.cols();
        const auto r = split_recording(L);
        std::vector<FrameRange> allowed;
        if (p == Partition::Train) allowed = r.train;
        if (p == Partition::Val) allowed = {r.val};
        if (p == Partition::Test) allowed = {r.test};
        bool inside = false;
        for (const auto& a : allowed)
          inside = inside || (t.start >= a.begin && t.start + 704 <= a.end);
        CHECK(inside);
      }
    }
  }
  SUBCASE("counts follow the closed form per partition, both orderings") {
    for (const auto& rec : recs) {
      const long L = rec.eeg.frames();
      const auto r = split_recording(L);
      const auto counts_train = data.train.subject_counts();
      const auto counts_test = data.test.subject_counts();
      const long train = expected_count(r.train[0].size()) + expected_count(r.train[1].size());
      CHECK(static_cast<long>(counts_train.at(rec.subject_id)) == 2 * train);
      CHECK(static_cast<long>(counts_test.at(rec.subject_id)) == 2 * expected_count(r.test.size()));
    }
  }
  SUBCASE("pooled training set is the union of both subjects") {
    const auto counts = data.train.subject_counts();
    CHECK(counts.size() == 2);
    size_t total = 0;
    for (const auto& [s, n] : counts) total += n;
    CHECK(total == data.train.size());
  }
  SUBCASE("provenance, offsets and labels") {
    size_t ones = 0;
    for (size_t i = 0; i < data.train.size(); ++i) {
      const auto& t = data.train.triples[i];
      CHECK(t.mismatch_start == t.start + 384);
      const double offset = data.train.source_of(i).subject_id == "s01" ? 0.0 : 1e7;
      CHECK(data.train.eeg(i)(0, 0) == t.start + offset);
      // Matched window shares the EEG start frame.
      CHECK(data.train.match(i)(0, 0) == t.start + offset + 0.5);
      const auto a = data.train.speech_a(i);
      CHECK(a(0, 0) == (t.a_is_match ? t.start : t.mismatch_start) + offset + 0.5);
      ones += t.a_is_match ? 1 : 0;
    }
    CHECK(2 * ones == data.train.size());
  }
  SUBCASE("seeded shuffle is reproducible") {
    const auto again = assemble_dataset(recs, "env", {}, {}, {.seed = 7});
    const auto other = assemble_dataset(recs, "env", {}, {}, {.seed = 8});
    bool same = true, differs = false;
    for (size_t i = 0; i < data.train.size(); ++i) {
      const auto &x = data.train.triples[i], &y = again.train.triples[i], &z = other.train.triples[i];
      same = same && x.source == y.source && x.start == y.start && x.a_is_match == y.a_is_match;
      differs = differs || x.source != z.source || x.start != z.start;
    }
    CHECK(same);
    CHECK(differs);
  }
  SUBCASE("concatenated features truncate to the common length") {
    const auto both = assemble_dataset(recs, "env+bpc");
    CHECK(both.train.feature_dim() == 7);
    CHECK(both.train.sources[0]->feat.cols() == 12000);
    CHECK(both.train.sources[0]->feat(1, 10) == 10.25);
  }
  SUBCASE("missing feature names the recording") {
    try {
      assemble_dataset(recs, "mel");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NotFound);
      CHECK(std::string(e.what()).find("s01_story") != std::string::npos);
    }
  }
}

TEST_CASE("dataset serialization round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "eegmatch_dataset_test";
  std::filesystem::remove_all(dir);
  const std::vector<RecordingInput> recs = {recording("s01", 8000, 0.0),
                                            recording("s02", 8000, 3.0)};
  const auto data = assemble_dataset(recs, "envelope", {}, {}, {.seed = 3});
  save_dataset(dir, data);
  const auto back = load_dataset(dir);
  for (auto p : {Partition::Train, Partition::Val, Partition::Test}) {
    const auto &a = data.get(p), &b = back.get(p);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a.source_of(i).subject_id == b.source_of(i).subject_id);
      CHECK(a.triples[i].start == b.triples[i].start);
      CHECK(a.triples[i].a_is_match == b.triples[i].a_is_match);
      CHECK(a.speech_b(i) == b.speech_b(i));
    }
  }
  CHECK(std::filesystem::exists(dir / "index.csv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset manifest") {
  const auto dir = std::filesystem::temp_directory_path() / "eegmatch_manifest_test";
  std::filesystem::create_directories(dir);
  write_tensor(dir / "eeg.ndmm", ramp(4, 800));
  write_tensor(dir / "env.ndmm", ramp(1, 800));
  DatasetManifest m;
  m.subjects.push_back({"s01", {{"s01_a", "eeg.ndmm", {}, {}, {}, {{"envelope", "env.ndmm"}}}}});
  save_manifest(dir / "manifest.json", m);
  const auto back = load_manifest(dir / "manifest.json");
  REQUIRE(back.subjects.size() == 1);
  CHECK(back.subjects[0].recordings[0].features.at("envelope") == "env.ndmm");
  const auto recs = load_recordings(back, "env");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].features.at("envelope").frames() == 800);
  CHECK_THROWS_AS(load_recordings(back, "mel"), Error);
  std::filesystem::remove_all(dir);
}
