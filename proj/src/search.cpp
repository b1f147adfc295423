#include "pdlopt/search.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <thread>

#include "pdlopt/error.hpp"

namespace pdlopt {

namespace {

SearchOutcome outcome_from_fixture(const Json& entry, const std::string& query) {
  const std::string path = "[\"" + query + "\"]";
  if (!entry.is_object()) throw Error(ErrorCode::InvalidArgument, "fixture entry must be an object", path);
  SearchOutcome out;
  if (entry.contains("summary")) {
    out.kind = SearchOutcome::Kind::Found;
    out.summary = entry.at("summary").get<std::string>();
  } else if (entry.contains("disambiguation")) {
    out.kind = SearchOutcome::Kind::Ambiguous;
    out.titles = entry.at("disambiguation").get<std::vector<std::string>>();
  } else if (entry.contains("results")) {
    out.kind = SearchOutcome::Kind::NoResults;
  } else {
    throw Error(ErrorCode::InvalidArgument, "fixture entry needs summary, disambiguation or results", path);
  }
  return out;
}

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
  ~SemaphoreGuard() { s_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
};

std::string title_path(std::string title) {
  for (char& c : title)
    if (c == ' ') c = '_';
  return httplib::detail::encode_query_param(title);
}

}  // namespace

FixtureSearchClient::FixtureSearchClient(const Json& fixture) {
  if (!fixture.is_object()) throw Error(ErrorCode::InvalidArgument, "search fixture must be a JSON object");
  for (const auto& [query, entry] : fixture.items()) entries_.emplace(query, outcome_from_fixture(entry, query));
}

std::shared_ptr<FixtureSearchClient> FixtureSearchClient::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open search fixture", path);
  Json fixture = Json::parse(in, nullptr, false);
  if (fixture.is_discarded()) throw Error(ErrorCode::Io, "search fixture is not valid JSON", path);
  return std::make_shared<FixtureSearchClient>(fixture);
}

SearchOutcome FixtureSearchClient::lookup(std::string_view query) {
  auto it = entries_.find(query);
  if (it == entries_.end()) return {};
  return it->second;
}

WikipediaSearchClient::WikipediaSearchClient(WikipediaConfig config)
    : config_(std::move(config)), in_flight_(std::max(1, config_.max_concurrent)) {}

WikipediaConfig WikipediaSearchClient::config_from_env() {
  WikipediaConfig config;
  if (const char* url = std::getenv("PDLOPT_WIKIPEDIA_URL"); url != nullptr && *url != '\0') config.base_url = url;
  return config;
}

Json WikipediaSearchClient::get_json(const std::string& path, bool allow_not_found) {
  SemaphoreGuard guard(in_flight_);
  auto backoff = config_.backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(config_.base_url);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_follow_location(true);
    auto res = client.Get(path, {{"User-Agent", "pdlopt/0.1"}});
    if (!res) {
      last_error = httplib::to_string(res.error());
      spdlog::debug("search GET {} failed: {}", path, last_error);
      continue;
    }
    if (res->status == 404 && allow_not_found) return nullptr;
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw Error(ErrorCode::BackendProtocol, "search endpoint returned HTTP " + std::to_string(res->status), path);
    Json body = Json::parse(res->body, nullptr, false);
    if (body.is_discarded()) throw Error(ErrorCode::BackendProtocol, "search endpoint returned invalid JSON", path);
    return body;
  }
  throw Error(ErrorCode::BackendTransport, "search request failed: " + last_error, path);
}

SearchOutcome WikipediaSearchClient::lookup(std::string_view query) {
  const std::string q(query);
  Json hits = get_json("/w/api.php?action=query&list=search&format=json&srlimit=1&srsearch=" +
                           httplib::detail::encode_query_param(q),
                       false);
  const Json* list = nullptr;
  if (hits.contains("query") && hits["query"].contains("search")) list = &hits["query"]["search"];
  if (list == nullptr || !list->is_array() || list->empty()) return {};
  const std::string title = (*list)[0].value("title", std::string());
  if (title.empty()) return {};

  Json summary = get_json("/api/rest_v1/page/summary/" + title_path(title), true);
  if (summary.is_null()) return {};
  SearchOutcome out;
  if (summary.value("type", std::string()) == "disambiguation") {
    Json links = get_json("/w/api.php?action=query&prop=links&format=json&plnamespace=0&pllimit=50&titles=" +
                              httplib::detail::encode_query_param(title),
                          false);
    out.kind = SearchOutcome::Kind::Ambiguous;
    if (links.contains("query") && links["query"].contains("pages")) {
      for (const auto& [id, page] : links["query"]["pages"].items()) {
        if (!page.contains("links")) continue;
        for (const auto& link : page["links"]) out.titles.push_back(link.value("title", std::string()));
      }
    }
    if (out.titles.empty()) out.titles.push_back(title);
    return out;
  }
  out.kind = SearchOutcome::Kind::Found;
  out.summary = summary.value("extract", std::string());
  if (out.summary.empty()) out.kind = SearchOutcome::Kind::NoResults;
  return out;
}

}  // namespace pdlopt
