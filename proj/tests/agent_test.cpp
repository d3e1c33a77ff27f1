#include <doctest.h>

#include <numeric>
#include <regex>

#include "agents.hpp"
#include "sharedb/scriptio.hpp"

using namespace sharedb;
using namespace sharedb::test;
using agent::Agent;
using agent::AgentError;

namespace {

const std::regex kSealedLine(R"(^\$[0-9]+@[0-9A-F]+$)");

struct World {
  LiveSyncd syncd;
  TempDir root;

  std::unique_ptr<Agent> make(const std::string& user, bool create_table = true) {
    auto a = std::make_unique<Agent>(agent_config(root.path(), user, syncd.url()));
    a->enroll();
    Catalog& c = a->open_catalog();
    if (create_table && !c.has_table("students")) {
      c.create_table(students_schema());
    }
    return a;
  }
  std::unique_ptr<Agent> reopen(const std::string& user) {
    auto a = std::make_unique<Agent>(agent_config(root.path(), user, syncd.url()));
    a->open_catalog();
    return a;
  }
};

std::vector<std::int64_t> pks(std::initializer_list<std::int64_t> v) { return v; }
std::vector<std::string> users(std::initializer_list<std::string> v) { return v; }

std::vector<std::int64_t> ids_in(Catalog& c) {
  std::vector<std::int64_t> out;
  for (const auto& r : c.scan("students")) {
    out.push_back(std::get<std::int64_t>(r.values[0]));
  }
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  TempDir root;
  auto c = agent_config(root.path(), "u", "http://127.0.0.1:1");
  CHECK_NOTHROW(c.validate());
  auto empty = c;
  empty.credential.clear();
  CHECK_THROWS_AS(empty.validate(), AgentError);
  auto inside = c;
  inside.key_cache_path = c.catalog_dir / "keys.cache";
  CHECK_THROWS_AS(inside.validate(), AgentError);
  auto nested = c;
  nested.key_cache_path = c.catalog_dir / "sub" / ".." / "k";
  CHECK_THROWS_AS(nested.validate(), AgentError);
}

TEST_CASE_FIXTURE(World, "identity persists and is sealed under the credential") {
  Bytes pub;
  {
    auto a = make("alice");
    pub = a->public_key().serialize();
    a->enroll();
  }
  auto again = reopen("alice");
  CHECK(again->public_key().serialize() == pub);
  CHECK_NOTHROW(again->enroll());
  CHECK(syncd.store().get_public_key("alice") == pub);

  auto wrong = agent_config(root.path(), "alice", syncd.url());
  wrong.credential = "not-it";
  CHECK_THROWS_AS(Agent{wrong}, agent::LocalFileError);

  const std::string identity = read_file(root / "alice" / "keys.cache.identity");
  // No private key bytes in hex or raw form.
  CHECK(identity.find("private_key") == std::string::npos);
  CHECK(identity.rfind("SDBSEAL1", 0) == 0);
}

TEST_CASE_FIXTURE(World, "enroll rejects an id taken with another key") {
  auto a = make("alice");
  TempDir other;
  Agent impostor(agent_config(other.path(), "alice", syncd.url()));
  CHECK_THROWS_AS(impostor.enroll(), AgentError);
}

TEST_CASE_FIXTURE(World, "share one row with two receivers") {
  auto owner = make("owner");
  auto bob = make("bob");
  auto carol = make("carol");
  owner->catalog().insert_row("students", {std::int64_t{12}, std::string("Alice")});
  owner->catalog().insert_row("students", {std::int64_t{13}, std::string("O'Hara")});

  const auto ids = owner->share_rows("students", pks({12}), users({"bob", "carol"}));
  REQUIRE(ids.size() == 2);
  CHECK(ids[0] < ids[1]);
  CHECK(syncd.store().key_count() == 2);
  CHECK(syncd.store().pending_rows_for("bob").size() == 1);
  CHECK(syncd.store().pending_rows_for("carol").size() == 1);

  CHECK(bob->receive_pending() == 1);
  CHECK(carol->receive_pending() == 1);
  const auto brow = bob->catalog().find("students", 12);
  const auto crow = carol->catalog().find("students", 12);
  REQUIRE(brow);
  REQUIRE(crow);
  CHECK(brow->provenance == RowProvenance{Received{ids[0]}});
  CHECK(crow->provenance == RowProvenance{Received{ids[1]}});
  CHECK(scriptio::serialize_insert(students_schema(), brow->values) ==
        "INSERT INTO students(id,name) VALUES(12,'Alice');");
  CHECK(brow->values == crow->values);
  CHECK(syncd.store().pending_rows_for("bob").empty());

  // Owner keeps clear Owned lines; receivers hold only sealed lines for it.
  CHECK(is_owned(owner->catalog().find("students", 12)->provenance));
  owner->close_catalog();
  bob->close_catalog();
  const auto owner_lines = read_lines(root / "owner" / "catalog" / "db.script");
  CHECK(std::count(owner_lines.begin(), owner_lines.end(), "INSERT INTO students(id,name) VALUES(12,'Alice');") ==
        1);
  const std::string bob_files = read_tree(root / "bob" / "catalog");
  CHECK(bob_files.find("Alice") == std::string::npos);
  const auto bob_lines = read_lines(root / "bob" / "catalog" / "db.script");
  REQUIRE(bob_lines.size() == 2);
  CHECK(std::regex_match(bob_lines[1], kSealedLine));
  CHECK(bob_lines[1].rfind("$" + std::to_string(ids[0]) + "@", 0) == 0);
}

TEST_CASE_FIXTURE(World, "share nothing makes no network calls") {
  auto owner = make("owner");
  make("bob");
  const auto before = owner->client().request_count();
  CHECK(owner->share_rows("students", {}, users({"bob"})).empty());
  CHECK(owner->share_rows("students", pks({1}), {}).empty());
  CHECK(owner->client().request_count() == before);
}

TEST_CASE_FIXTURE(World, "share rejects received rows, unknown receivers and missing rows") {
  auto owner = make("owner");
  auto bob = make("bob");
  make("carol");
  owner->catalog().insert_row("students", {std::int64_t{1}, std::string("x")});
  owner->share_rows("students", pks({1}), users({"bob"}));
  REQUIRE(bob->receive_pending() == 1);

  CHECK_THROWS_AS(bob->share_rows("students", pks({1}), users({"carol"})), AgentError);
  CHECK_THROWS_AS(owner->share_rows("students", pks({1}), users({"nobody"})), AgentError);
  CHECK_THROWS_AS(owner->share_rows("students", pks({2}), users({"bob"})), AgentError);
  CHECK_THROWS_AS(owner->share_rows("students", pks({1}), users({"owner"})), AgentError);
  CHECK_THROWS_AS(owner->share_rows("nope", pks({1}), users({"bob"})), CatalogError);
  CHECK(syncd.store().next_row_id() == 2);
}

TEST_CASE_FIXTURE(World, "receive with nothing pending") {
  auto bob = make("bob");
  const std::string log = read_file(bob->catalog().log_path());
  CHECK(bob->receive_pending() == 0);
  CHECK(bob->catalog().total_rows() == 0);
  CHECK(read_file(bob->catalog().log_path()) == log);
}

TEST_CASE_FIXTURE(World, "a key revoked before delivery skips the row") {
  auto owner = make("owner");
  auto bob = make("bob");
  owner->catalog().insert_row("students", {std::int64_t{1}, std::string("one")});
  owner->catalog().insert_row("students", {std::int64_t{2}, std::string("two")});
  const auto ids = owner->share_rows("students", pks({1, 2}), users({"bob"}));
  const auto out = owner->revoke_access(std::vector<std::uint64_t>{ids[0]}, "bob");
  REQUIRE(out.size() == 1);
  CHECK(out[0].ok);

  CHECK(bob->receive_pending() == 1);
  CHECK(ids_in(bob->catalog()) == std::vector<std::int64_t>{2});
  CHECK(syncd.store().pending_rows_for("bob").empty());
  CHECK(bob->key_cache().size() == 1);
}

TEST_CASE_FIXTURE(World, "resolve_key hits the cache on the second call") {
  auto owner = make("owner");
  auto bob = make("bob");
  owner->catalog().insert_row("students", {std::int64_t{1}, std::string("one")});
  const auto ids = owner->share_rows("students", pks({1}), users({"bob"}));
  bob->key_cache().evict(ids[0]);

  const auto before = bob->client().request_count();
  CHECK(std::holds_alternative<crypto::RowKey>(bob->resolve_key(ids[0])));
  const auto after_first = bob->client().request_count();
  CHECK(after_first == before + 1);
  CHECK(std::holds_alternative<crypto::RowKey>(bob->resolve_key(ids[0])));
  CHECK(bob->client().request_count() == after_first);
  CHECK(std::holds_alternative<KeyDenied>(bob->resolve_key(999)));
}

TEST_CASE_FIXTURE(World, "offline reopen from cache; cold cache defers lines verbatim") {
  auto owner = make("owner");
  auto bob = make("bob");
  for (std::int64_t i = 1; i <= 5; ++i) {
    owner->catalog().insert_row("students", {i, "s" + std::to_string(i)});
  }
  owner->share_rows("students", pks({1, 3, 5}), users({"bob"}));
  bob->catalog().insert_row("students", {std::int64_t{100}, std::string("own")});
  REQUIRE(bob->receive_pending() == 3);
  bob->close_catalog();
  bob.reset();
  const auto expected_rows = [&] {
    auto b = reopen("bob");
    return b->catalog().scan("students");
  }();
  REQUIRE(expected_rows.size() == 4);

  syncd.stop();
  {
    auto b = reopen("bob");
    CHECK(b->catalog().scan("students") == expected_rows);
    CHECK(b->catalog().deferred_lines().empty());
  }

  // Cold cache, still offline.
  std::filesystem::remove(root / "bob" / "keys.cache");
  auto before = read_lines(root / "bob" / "catalog" / "db.script");
  std::vector<std::string> sealed;
  std::copy_if(before.begin(), before.end(), std::back_inserter(sealed),
               [](const std::string& l) { return l.starts_with("$"); });
  REQUIRE(sealed.size() == 3);
  {
    auto b = reopen("bob");
    CHECK(ids_in(b->catalog()) == std::vector<std::int64_t>{100});
    CHECK(b->catalog().deferred_lines() == sealed);
    b->close_catalog();
  }
  auto after = read_lines(root / "bob" / "catalog" / "db.script");
  std::vector<std::string> kept;
  std::copy_if(after.begin(), after.end(), std::back_inserter(kept),
               [](const std::string& l) { return l.starts_with("$"); });
  CHECK(kept == sealed);

  // Back online: the deferred rows materialize again.
  syncd.start();
  auto b = reopen("bob");
  CHECK(b->catalog().scan("students") == expected_rows);
}

TEST_CASE_FIXTURE(World, "revocation removes the row after cache revalidation") {
  auto owner = make("owner");
  auto bob = make("bob");
  auto carol = make("carol");
  owner->catalog().insert_row("students", {std::int64_t{7}, std::string("secret")});
  const auto to_bob = owner->share_rows("students", pks({7}), users({"bob"}));
  const auto to_carol = owner->share_rows("students", pks({7}), users({"carol"}));
  REQUIRE(bob->receive_pending() == 1);
  REQUIRE(carol->receive_pending() == 1);
  bob->close_catalog();
  carol->close_catalog();

  std::vector<std::uint64_t> batch{9999, to_bob[0], to_carol[0]};
  const auto out = owner->revoke_access(batch, "bob");
  REQUIRE(out.size() == 3);
  CHECK_FALSE(out[0].ok);
  CHECK(out[0].error == "not_found");
  CHECK(out[1].ok);
  CHECK_FALSE(out[2].ok);
  CHECK(out[2].error == "not_found");

  CHECK(bob->revalidate_cache() == 1);
  CHECK(bob->key_cache().size() == 0);
  bob->open_catalog();
  CHECK(bob->catalog().row_count("students") == 0);
  bob->close_catalog();
  CHECK(read_tree(root / "bob" / "catalog").find('$') == std::string::npos);
  CHECK(syncd.store().find_row(to_bob[0]).has_value());

  carol->open_catalog();
  CHECK(carol->catalog().row_count("students") == 1);
  CHECK(carol->revalidate_cache() == 0);
}

TEST_CASE_FIXTURE(World, "reopen after revocation without revalidation drops on a cache miss") {
  auto owner = make("owner");
  auto bob = make("bob");
  owner->catalog().insert_row("students", {std::int64_t{7}, std::string("secret")});
  const auto ids = owner->share_rows("students", pks({7}), users({"bob"}));
  REQUIRE(bob->receive_pending() == 1);
  bob->close_catalog();
  owner->revoke_access(ids, "bob");
  bob->key_cache().evict(ids[0]);
  bob->open_catalog();
  CHECK(bob->catalog().row_count("students") == 0);
}

TEST_CASE_FIXTURE(World, "undecryptable or unparsable rows are quarantined") {
  auto owner = make("owner");
  auto bob = make("bob");
  auto& cli = owner->client();
  const crypto::PublicKey bob_key = bob->public_key();

  auto send_raw = [&](const Bytes& payload, const crypto::RowKey& key) {
    const auto id = cli.send_row("bob", payload);
    cli.deposit_key(id, "bob", crypto::wrap_key(key, bob_key));
    return id;
  };
  const crypto::RowKey k1 = crypto::generate_row_key();
  const crypto::RowKey k2 = crypto::generate_row_key();
  // Encrypted under a different key than the one deposited.
  send_raw(crypto::encrypt_row(as_bytes("INSERT INTO students(id,name) VALUES(1,'a');"), k2).bytes(), k1);
  send_raw(crypto::encrypt_row(as_bytes("not sql"), k1).bytes(), k1);
  send_raw(crypto::encrypt_row(as_bytes("INSERT INTO missing(id) VALUES(1);"), k1).bytes(), k1);
  send_raw(Bytes{1, 2, 3}, k1);
  // A wrapped key for someone else.
  const auto id = cli.send_row("bob", crypto::encrypt_row(as_bytes("x"), k1).bytes());
  cli.deposit_key(id, "bob", crypto::wrap_key(k1, owner->public_key()));
  const auto good = send_raw(crypto::encrypt_row(as_bytes("INSERT INTO students(name,id) VALUES('ok',5);"), k2).bytes(), k2);

  CHECK(bob->receive_pending() == 1);
  CHECK(bob->quarantined() == 5);
  CHECK(syncd.store().pending_rows_for("bob").empty());
  CHECK(bob->key_cache().ids() == std::vector<std::uint64_t>{good});
  REQUIRE(bob->catalog().find("students", 5));
  CHECK(std::get<std::string>(bob->catalog().find("students", 5)->values[1]) == "ok");
}

TEST_CASE_FIXTURE(World, "a newer share of the same dossier replaces the older one") {
  auto owner = make("owner");
  auto bob = make("bob");
  owner->catalog().insert_row("students", {std::int64_t{1}, std::string("v")});
  const auto first = owner->share_rows("students", pks({1}), users({"bob"}));
  const auto second = owner->share_rows("students", pks({1}), users({"bob"}));
  // Both versions are inserted in order; the second supersedes the first.
  CHECK(bob->receive_pending() == 2);
  CHECK(bob->quarantined() == 0);
  CHECK(bob->catalog().row_count("students") == 1);
  const auto row = bob->catalog().find("students", 1);
  REQUIRE(row);
  CHECK(received_id(row->provenance) == second[0]);
  (void)first;
}

TEST_CASE_FIXTURE(World, "unreachable synchronizer aborts receive and leaves rows pending") {
  auto owner = make("owner");
  auto bob = make("bob");
  owner->catalog().insert_row("students", {std::int64_t{1}, std::string("a")});
  owner->share_rows("students", pks({1}), users({"bob"}));
  syncd.stop();
  CHECK_THROWS_AS(bob->receive_pending(), agent::SyncUnreachable);
  CHECK(bob->catalog().total_rows() == 0);
  syncd.start();
  CHECK(syncd.store().pending_rows_for("bob").size() == 1);
  CHECK(bob->receive_pending() == 1);
}

TEST_CASE_FIXTURE(World, "a lost key deposit is completed on retry") {
  FaultProxy proxy(syncd.url(), std::chrono::milliseconds(900));
  auto bob = make("bob");
  auto cfg = agent_config(root.path(), "owner", proxy.url());
  cfg.timeout = std::chrono::milliseconds(300);
  Agent owner(cfg);
  owner.enroll();
  owner.open_catalog().create_table(students_schema());
  owner.catalog().insert_row("students", {std::int64_t{1}, std::string("one")});
  owner.catalog().insert_row("students", {std::int64_t{2}, std::string("two")});

  proxy.arm("POST /v1/keys");
  CHECK_THROWS_AS(owner.share_rows("students", pks({1}), users({"bob"})), agent::SyncUnreachable);
  CHECK(owner.outbox_size() == 1);
  // The row went out without its key: the receiver skips it.
  CHECK(bob->receive_pending() == 0);
  CHECK(syncd.store().pending_rows_for("bob").empty());

  const auto ids = owner.share_rows("students", pks({2}), users({"bob"}));
  CHECK(owner.outbox_size() == 0);
  CHECK(ids.size() == 1);
  CHECK(bob->receive_pending() == 2);
  CHECK(ids_in(bob->catalog()) == std::vector<std::int64_t>{1, 2});
}

TEST_CASE_FIXTURE(World, "key cache file never holds a key in the clear") {
  auto owner = make("owner");
  auto bob = make("bob");
  for (std::int64_t i = 0; i < 20; ++i) {
    owner->catalog().insert_row("students", {i, std::string("n")});
  }
  std::vector<std::int64_t> all(20);
  std::iota(all.begin(), all.end(), 0);
  owner->share_rows("students", all, users({"bob"}));
  REQUIRE(bob->receive_pending() == 20);
  bob->close_catalog();
  const std::string cache = read_file(root / "bob" / "keys.cache");
  const std::string files = cache + read_file(root / "bob" / "keys.cache.identity") + read_tree(root / "bob" / "catalog");
  for (const auto id : bob->key_cache().ids()) {
    const auto key = *bob->key_cache().get(id);
    const std::string raw(as_chars(key.bytes()));
    CHECK(files.find(raw) == std::string::npos);
    CHECK(files.find(to_hex(key.bytes())) == std::string::npos);
    CHECK(files.find(to_base64(key.bytes())) == std::string::npos);
  }
  // Survives a restart.
  bob.reset();
  auto again = reopen("bob");
  CHECK(again->key_cache().size() == 20);
}
