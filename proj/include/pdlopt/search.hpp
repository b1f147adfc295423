#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "pdlopt/json.hpp"

namespace pdlopt {

struct SearchOutcome {
  enum class Kind { Found, NoResults, Ambiguous };
  Kind kind = Kind::NoResults;
  std::string summary;              // Found
  std::vector<std::string> titles;  // Ambiguous: candidate article titles
};

/// Looks up the first search result for a query. Implementations are safe
/// for concurrent use. Transport failures throw Error(BackendTransport).
class SearchClient {
 public:
  virtual ~SearchClient() = default;
  virtual SearchOutcome lookup(std::string_view query) = 0;
};

/// Offline client keyed by exact query string. Fixture format:
///   { "<query>": {"summary": "..."} | {"disambiguation": ["A", "B"]} | {"results": []} }
/// Unknown queries have no results.
class FixtureSearchClient final : public SearchClient {
 public:
  explicit FixtureSearchClient(const Json& fixture);
  static std::shared_ptr<FixtureSearchClient> load(const std::string& path);

  SearchOutcome lookup(std::string_view query) override;

 private:
  std::map<std::string, SearchOutcome, std::less<>> entries_;
};

struct WikipediaConfig {
  std::string base_url = "https://en.wikipedia.org";
  int retries = 3;
  std::chrono::milliseconds timeout{10'000};
  std::chrono::milliseconds backoff{500};  // doubled per retry
  int max_concurrent = 4;
};

/// Live client: MediaWiki search for the first hit, then the REST page
/// summary; disambiguation pages are expanded to their linked titles.
class WikipediaSearchClient final : public SearchClient {
 public:
  explicit WikipediaSearchClient(WikipediaConfig config);
  SearchOutcome lookup(std::string_view query) override;

  /// Base URL from PDLOPT_WIKIPEDIA_URL when set, else the default.
  static WikipediaConfig config_from_env();

 private:
  Json get_json(const std::string& path, bool allow_not_found);

  WikipediaConfig config_;
  std::counting_semaphore<1024> in_flight_;
};

}  // namespace pdlopt
