#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "geosage/errors.hpp"
#include "geosage/geo.hpp"

namespace geosage {

// One check-in after dictionary resolution and role labeling.
struct UserActivity {
  std::int32_t user = 0;
  std::int32_t item = 0;
  GeoPoint location;
  std::vector<std::int32_t> words;  // canonical item word multiset
  std::int8_t role = 0;             // 0 local, 1 tourist
};

struct UserProfile {
  std::int32_t user = 0;
  std::vector<UserActivity> activities;
  GeoPoint home;
};

// A check-in line as parsed, before ids exist. role -1 means "unknown".
struct RawCheckin {
  std::string user;
  std::string item;
  GeoPoint location;
  std::vector<std::string> words;
  std::int8_t role = -1;
};

struct ParseResult {
  std::vector<RawCheckin> records;
  std::vector<MalformedRecord> malformed;
};

struct Dictionaries {
  std::vector<std::string> users;   // id -> string, ids dense in [0, n)
  std::vector<std::string> items;
  std::vector<std::string> vocab;
  std::unordered_map<std::string, std::int32_t> user_ids;
  std::unordered_map<std::string, std::int32_t> item_ids;
  std::unordered_map<std::string, std::int32_t> vocab_ids;
  std::vector<GeoPoint> item_locations;              // per item id
  std::vector<std::vector<std::int32_t>> item_words; // per item id

  std::int32_t n_users() const { return static_cast<std::int32_t>(users.size()); }
  std::int32_t n_items() const { return static_cast<std::int32_t>(items.size()); }
  std::int32_t n_words() const { return static_cast<std::int32_t>(vocab.size()); }
};

// Identifies a dictionary set; models record it and queries check it.
std::uint64_t dict_hash(const Dictionaries& d);

enum class SplitTag : std::uint8_t { kTrain = 0, kTestHome = 1, kTestOut = 2 };

struct SplitDataset {
  std::vector<UserActivity> train;
  std::vector<UserActivity> test_home;
  std::vector<UserActivity> test_out;
  std::uint64_t seed = 0;
};

struct IngestStats {
  std::uint32_t malformed_skipped = 0;
  std::uint32_t dropped_out_of_bbox = 0;
  std::uint32_t role_mismatches = 0;      // input label disagreed with the distance rule
  std::uint32_t location_conflicts = 0;   // same item id seen with a different location
};

// Everything ingestion produces, in one versioned container.
struct CorpusBundle {
  Dictionaries dicts;
  std::vector<UserActivity> activities;  // input order
  std::vector<SplitTag> split_tags;      // parallel to activities
  std::vector<GeoPoint> homes;           // per user id
  PyramidConfig pyramid;
  double d_km = 100.0;
  double split_fraction = 0.30;
  std::uint64_t seed = 0;
  IngestStats stats;

  SplitDataset split_view() const;
};

struct IngestOptions {
  PyramidConfig pyramid;
  double d_km = 100.0;
  double split_fraction = 0.30;
  std::uint64_t seed = 0;
};

// Parses the 5-field tab-separated check-in format, collecting malformed
// lines; throws ParseError if more than 1% of lines are malformed.
ParseResult parse_checkins(std::istream& in);

// Home location: the explicit one if given, otherwise the centroid of the
// leaf cell holding the most of the user's check-ins (ties to the smallest
// (x, y) lexicographically).
GeoPoint infer_home(const std::vector<UserActivity>& activities, const PyramidConfig& cfg,
                    std::optional<GeoPoint> explicit_home);

// Sets every activity's role from the distance rule: tourist iff strictly
// farther than d_km from home. Returns how many pre-set roles disagreed.
std::uint32_t label_roles(UserProfile& profile, double d_km);

// Per-user split: floor(fraction * n) of each role's activities drawn
// uniformly without replacement into the matching test set.
std::vector<SplitTag> split_tags(const std::vector<UserActivity>& activities,
                                 std::int32_t n_users, double fraction, std::uint64_t seed);

SplitDataset split(const std::vector<UserActivity>& activities, std::int32_t n_users,
                   double fraction, std::uint64_t seed);

// Full ingestion pipeline: parse, drop out-of-bbox records, build
// dictionaries, infer homes (explicit_homes maps user string to a location),
// label roles, split.
CorpusBundle ingest(std::istream& checkins,
                    const std::unordered_map<std::string, GeoPoint>& explicit_homes,
                    const IngestOptions& opts);

// Parses an optional homes file of "user-id<TAB>lat,lon" lines.
std::unordered_map<std::string, GeoPoint> parse_homes(std::istream& in);

void save_corpus(const CorpusBundle& bundle, std::ostream& out);
CorpusBundle load_corpus(std::istream& in);

// Items each user visited in the training split, sorted, per user id.
std::vector<std::vector<std::int32_t>> training_visits(const CorpusBundle& bundle);

// Number of training activities per user id.
std::vector<std::int32_t> training_activity_counts(const CorpusBundle& bundle);

}  // namespace geosage
