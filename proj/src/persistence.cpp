#include "coach/persistence.hpp"

#include <sodium.h>
#include <sqlite3.h>

#include <algorithm>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>

#include "coach/error.hpp"

namespace coach {

namespace {

void ensure_sodium() {
  static const bool ready = sodium_init() >= 0;
  if (!ready) throw Error(ErrorCode::StorageUnavailable, "libsodium failed to initialise");
}

}  // namespace

PasswordHashing PasswordHashing::interactive() {
  return {crypto_pwhash_OPSLIMIT_INTERACTIVE, crypto_pwhash_MEMLIMIT_INTERACTIVE};
}

PasswordHashing PasswordHashing::minimal() {
  return {crypto_pwhash_OPSLIMIT_MIN, crypto_pwhash_MEMLIMIT_MIN};
}

std::string hash_password(std::string_view password, const PasswordHashing& params) {
  ensure_sodium();
  char out[crypto_pwhash_STRBYTES];
  if (crypto_pwhash_str_alg(out, password.data(), password.size(), params.opslimit, params.memlimit,
                            crypto_pwhash_ALG_ARGON2ID13) != 0) {
    throw Error(ErrorCode::StorageUnavailable, "password hashing ran out of memory");
  }
  return out;
}

bool verify_password(std::string_view password, const std::string& stored_hash) {
  ensure_sodium();
  return crypto_pwhash_str_verify(stored_hash.c_str(), password.data(), password.size()) == 0;
}

std::string random_id() {
  ensure_sodium();
  unsigned char bytes[16];
  randombytes_buf(bytes, sizeof bytes);
  char hex[sizeof bytes * 2 + 1];
  sodium_bin2hex(hex, sizeof hex, bytes, sizeof bytes);
  return hex;
}

// ---------------------------------------------------------------------------

Store::Store(PasswordHashing hashing, Clock clock)
    : hashing_(hashing), clock_(std::move(clock)), dummy_hash_(hash_password("not a password", hashing)) {}

std::string Store::create_user(const std::string& username, std::string_view password) {
  if (username.empty()) throw Error(ErrorCode::BadRequest, "username is required");
  if (password.empty()) throw Error(ErrorCode::BadRequest, "password is required");
  UserRecord user{random_id(), username, hash_password(password, hashing_), now()};
  insert_user(user);
  return user.user_id;
}

std::string Store::authenticate(const std::string& username, std::string_view password) {
  auto user = find_user(username);
  // Unknown users still pay for one verification so timing does not reveal them.
  const bool ok = verify_password(password, user ? user->password_hash : dummy_hash_);
  if (!user || !ok) throw Error(ErrorCode::AuthFailed, "wrong username or password");
  return user->user_id;
}

std::map<std::string, std::string> Store::long_term_artifacts(const std::string& conversation_id) {
  return coach::long_term_artifacts(load_snapshot(conversation_id));
}

// ---------------------------------------------------------------------------

void InMemoryStore::insert_user(const UserRecord& user) {
  std::unique_lock lock(mu_);
  if (users_by_name_.count(user.username)) {
    throw Error(ErrorCode::DuplicateUsername, "that username is taken");
  }
  users_by_name_.emplace(user.username, user);
  user_ids_.emplace(user.user_id, user.username);
}

std::optional<UserRecord> InMemoryStore::find_user(const std::string& username) {
  std::shared_lock lock(mu_);
  auto it = users_by_name_.find(username);
  if (it == users_by_name_.end()) return std::nullopt;
  return it->second;
}

InMemoryStore::Conversation& InMemoryStore::conversation(const std::string& id) {
  auto it = conversations_.find(id);
  if (it == conversations_.end()) throw Error(ErrorCode::NotFound, "no such task", id);
  return it->second;
}

void InMemoryStore::create_conversation(const SessionState& initial) {
  std::unique_lock lock(mu_);
  if (!user_ids_.count(initial.user_id)) throw Error(ErrorCode::NotFound, "no such user");
  Conversation conv;
  conv.record = {initial.session_id, initial.user_id, serialize_snapshot(initial), initial.created_at,
                 initial.updated_at};
  conversations_.emplace(initial.session_id, std::move(conv));
}

std::string InMemoryStore::conversation_owner(const std::string& conversation_id) {
  std::shared_lock lock(mu_);
  return conversation(conversation_id).record.user_id;
}

MessageRecord InMemoryStore::append(Conversation& conv, MessageRecord msg) {
  msg.message_id = random_id();
  msg.conversation_id = conv.record.conversation_id;
  msg.seq = conv.next_seq++;
  conv.messages.push_back(msg);
  return msg;
}

MessageRecord InMemoryStore::save_message(MessageRecord msg) {
  std::unique_lock lock(mu_);
  auto& conv = conversation(msg.conversation_id);
  return append(conv, std::move(msg));
}

std::vector<MessageRecord> InMemoryStore::load_messages(const std::string& conversation_id,
                                                        std::optional<Stage> stage) {
  std::shared_lock lock(mu_);
  std::vector<MessageRecord> out;
  for (const auto& m : conversation(conversation_id).messages) {
    if (!stage || m.stage == *stage) out.push_back(m);
  }
  return out;
}

void InMemoryStore::save_snapshot(const std::string& conversation_id, const SessionState& state) {
  std::string doc = serialize_snapshot(state);
  std::unique_lock lock(mu_);
  auto& conv = conversation(conversation_id);
  conv.record.snapshot = std::move(doc);
  conv.record.updated_at = state.updated_at;
}

SessionState InMemoryStore::load_snapshot(const std::string& conversation_id) {
  std::string doc;
  {
    std::shared_lock lock(mu_);
    doc = conversation(conversation_id).record.snapshot;
  }
  return deserialize_snapshot(doc);
}

std::vector<MessageRecord> InMemoryStore::commit_interaction(const std::string& conversation_id,
                                                             std::vector<MessageRecord> messages,
                                                             const SessionState& state) {
  std::string doc = serialize_snapshot(state);
  std::unique_lock lock(mu_);
  auto& conv = conversation(conversation_id);
  std::vector<MessageRecord> saved;
  for (auto& m : messages) {
    m.conversation_id = conversation_id;
    saved.push_back(append(conv, std::move(m)));
  }
  conv.record.snapshot = std::move(doc);
  conv.record.updated_at = state.updated_at;
  return saved;
}

std::size_t InMemoryStore::purge_messages_before(Timestamp cutoff) {
  std::unique_lock lock(mu_);
  std::size_t removed = 0;
  for (auto& [id, conv] : conversations_) {
    const auto before = conv.messages.size();
    std::erase_if(conv.messages, [&](const MessageRecord& m) { return m.created_at < cutoff; });
    removed += before - conv.messages.size();
  }
  return removed;
}

// ---------------------------------------------------------------------------

class SqliteStore::Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) fail("prepare");
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int i, const std::string& v) {
    sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Statement& bind(int i, std::string_view v) { return bind(i, std::string(v)); }
  Statement& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(stmt_, i, v);
    return *this;
  }

  /// True while a row is available.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    fail("step");
  }

  std::string text(int col) const {
    const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
    return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string{};
  }
  std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }

 private:
  [[noreturn]] void fail(const char* what) const {
    throw Error(ErrorCode::StorageUnavailable, std::string("sqlite ") + what + ": " + sqlite3_errmsg(db_));
  }

  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

namespace {

class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { run("BEGIN IMMEDIATE"); }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    run("COMMIT");
    done_ = true;
  }

 private:
  void run(const char* sql) {
    if (sqlite3_exec(db_, sql, nullptr, nullptr, nullptr) != SQLITE_OK) {
      throw Error(ErrorCode::StorageUnavailable, std::string("sqlite: ") + sqlite3_errmsg(db_));
    }
  }
  sqlite3* db_;
  bool done_ = false;
};

}  // namespace

SqliteStore::SqliteStore(const std::string& path, const std::filesystem::path& migrations_dir,
                         PasswordHashing hashing, Clock clock)
    : Store(hashing, std::move(clock)) {
  if (sqlite3_open_v2(path.c_str(), &db_,
                      SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    db_ = nullptr;
    throw Error(ErrorCode::StorageUnavailable, "cannot open database: " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec("PRAGMA foreign_keys = ON");
  exec("PRAGMA journal_mode = WAL");
  migrate(migrations_dir);
}

SqliteStore::~SqliteStore() { sqlite3_close(db_); }

void SqliteStore::exec(const std::string& sql) {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw Error(ErrorCode::StorageUnavailable, "sqlite: " + msg);
  }
}

int SqliteStore::schema_version() {
  std::lock_guard lock(mu_);
  Statement st(db_, "PRAGMA user_version");
  st.step();
  return static_cast<int>(st.integer(0));
}

void SqliteStore::migrate(const std::filesystem::path& dir) {
  static const std::regex name(R"((\d+)_.*\.sql)");
  std::vector<std::pair<int, std::filesystem::path>> files;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    std::smatch m;
    const std::string file = entry.path().filename().string();
    if (std::regex_match(file, m, name)) files.emplace_back(std::stoi(m[1]), entry.path());
  }
  if (ec || files.empty()) {
    throw Error(ErrorCode::StorageUnavailable, "no migrations found in " + dir.string());
  }
  std::sort(files.begin(), files.end());
  const int current = schema_version();
  for (const auto& [version, path] : files) {
    if (version <= current) continue;
    std::ifstream in(path);
    std::ostringstream sql;
    sql << in.rdbuf();
    std::lock_guard lock(mu_);
    Transaction tx(db_);
    exec(sql.str());
    exec("PRAGMA user_version = " + std::to_string(version));
    tx.commit();
  }
}

std::vector<std::string> SqliteStore::table_names() {
  std::lock_guard lock(mu_);
  Statement st(db_, "SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY name");
  std::vector<std::string> out;
  while (st.step()) out.push_back(st.text(0));
  return out;
}

void SqliteStore::insert_user(const UserRecord& user) {
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  {
    Statement taken(db_, "SELECT 1 FROM users WHERE username = ?");
    taken.bind(1, user.username);
    if (taken.step()) throw Error(ErrorCode::DuplicateUsername, "that username is taken");
  }
  Statement st(db_, "INSERT INTO users (user_id, username, password_hash, created_at) VALUES (?, ?, ?, ?)");
  st.bind(1, user.user_id).bind(2, user.username).bind(3, user.password_hash).bind(4, user.created_at);
  st.step();
  tx.commit();
}

std::optional<UserRecord> SqliteStore::find_user(const std::string& username) {
  std::lock_guard lock(mu_);
  Statement st(db_, "SELECT user_id, username, password_hash, created_at FROM users WHERE username = ?");
  st.bind(1, username);
  if (!st.step()) return std::nullopt;
  return UserRecord{st.text(0), st.text(1), st.text(2), st.integer(3)};
}

void SqliteStore::create_conversation(const SessionState& initial) {
  std::lock_guard lock(mu_);
  {
    Statement user(db_, "SELECT 1 FROM users WHERE user_id = ?");
    user.bind(1, initial.user_id);
    if (!user.step()) throw Error(ErrorCode::NotFound, "no such user");
  }
  Statement st(db_,
               "INSERT INTO conversations (conversation_id, user_id, snapshot, created_at, updated_at) "
               "VALUES (?, ?, ?, ?, ?)");
  st.bind(1, initial.session_id)
      .bind(2, initial.user_id)
      .bind(3, serialize_snapshot(initial))
      .bind(4, initial.created_at)
      .bind(5, initial.updated_at);
  st.step();
}

void SqliteStore::require_conversation(const std::string& id) {
  Statement st(db_, "SELECT 1 FROM conversations WHERE conversation_id = ?");
  st.bind(1, id);
  if (!st.step()) throw Error(ErrorCode::NotFound, "no such task", id);
}

std::string SqliteStore::conversation_owner(const std::string& conversation_id) {
  std::lock_guard lock(mu_);
  Statement st(db_, "SELECT user_id FROM conversations WHERE conversation_id = ?");
  st.bind(1, conversation_id);
  if (!st.step()) throw Error(ErrorCode::NotFound, "no such task", conversation_id);
  return st.text(0);
}

MessageRecord SqliteStore::insert_message(MessageRecord msg) {
  {
    Statement seq(db_, "SELECT COALESCE(MAX(seq), 0) + 1 FROM messages WHERE conversation_id = ?");
    seq.bind(1, msg.conversation_id);
    seq.step();
    msg.seq = seq.integer(0);
  }
  msg.message_id = random_id();
  Statement st(db_,
               "INSERT INTO messages (message_id, conversation_id, role, stage, content, created_at, seq) "
               "VALUES (?, ?, ?, ?, ?, ?, ?)");
  st.bind(1, msg.message_id)
      .bind(2, msg.conversation_id)
      .bind(3, role_name(msg.role))
      .bind(4, stage_name(msg.stage))
      .bind(5, msg.content)
      .bind(6, msg.created_at)
      .bind(7, msg.seq);
  st.step();
  return msg;
}

MessageRecord SqliteStore::save_message(MessageRecord msg) {
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  require_conversation(msg.conversation_id);
  auto saved = insert_message(std::move(msg));
  tx.commit();
  return saved;
}

std::vector<MessageRecord> SqliteStore::load_messages(const std::string& conversation_id,
                                                      std::optional<Stage> stage) {
  std::lock_guard lock(mu_);
  require_conversation(conversation_id);
  Statement st(db_,
               "SELECT message_id, conversation_id, role, stage, content, created_at, seq FROM messages "
               "WHERE conversation_id = ?1 AND (?2 = '' OR stage = ?2) ORDER BY seq");
  st.bind(1, conversation_id).bind(2, stage ? std::string(stage_name(*stage)) : std::string{});
  std::vector<MessageRecord> out;
  while (st.step()) {
    auto role = role_from_name(st.text(2));
    auto stg = stage_from_name(st.text(3));
    if (!role || !stg) throw Error(ErrorCode::StorageUnavailable, "corrupt message row");
    out.push_back({st.text(0), st.text(1), *role, *stg, st.text(4), st.integer(5), st.integer(6)});
  }
  return out;
}

void SqliteStore::write_snapshot(const std::string& id, const SessionState& state) {
  Statement st(db_, "UPDATE conversations SET snapshot = ?, updated_at = ? WHERE conversation_id = ?");
  st.bind(1, serialize_snapshot(state)).bind(2, state.updated_at).bind(3, id);
  st.step();
  if (sqlite3_changes(db_) == 0) throw Error(ErrorCode::NotFound, "no such task", id);
}

void SqliteStore::save_snapshot(const std::string& conversation_id, const SessionState& state) {
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  write_snapshot(conversation_id, state);
  tx.commit();
}

SessionState SqliteStore::load_snapshot(const std::string& conversation_id) {
  std::string doc;
  {
    std::lock_guard lock(mu_);
    Statement st(db_, "SELECT snapshot FROM conversations WHERE conversation_id = ?");
    st.bind(1, conversation_id);
    if (!st.step()) throw Error(ErrorCode::NotFound, "no such task", conversation_id);
    doc = st.text(0);
  }
  return deserialize_snapshot(doc);
}

std::vector<MessageRecord> SqliteStore::commit_interaction(const std::string& conversation_id,
                                                           std::vector<MessageRecord> messages,
                                                           const SessionState& state) {
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  require_conversation(conversation_id);
  std::vector<MessageRecord> saved;
  for (auto& m : messages) {
    m.conversation_id = conversation_id;
    saved.push_back(insert_message(std::move(m)));
  }
  write_snapshot(conversation_id, state);
  tx.commit();
  return saved;
}

std::size_t SqliteStore::purge_messages_before(Timestamp cutoff) {
  std::lock_guard lock(mu_);
  Statement st(db_, "DELETE FROM messages WHERE created_at < ?");
  st.bind(1, cutoff);
  st.step();
  return static_cast<std::size_t>(sqlite3_changes(db_));
}

std::unique_ptr<Store> open_store(const std::string& url, const std::filesystem::path& migrations_dir,
                                  PasswordHashing hashing) {
  if (url == "memory:") return std::make_unique<InMemoryStore>(hashing);
  if (url.rfind("sqlite:", 0) == 0) {
    return std::make_unique<SqliteStore>(url.substr(7), migrations_dir, hashing);
  }
  throw Error(ErrorCode::InvalidConfig, "database URL must be memory: or sqlite:<path>");
}

}  // namespace coach
