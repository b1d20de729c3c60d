#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "coach/prompt_engine.hpp"
#include "coach/session.hpp"

struct sqlite3;

namespace coach {

struct UserRecord {
  std::string user_id;
  std::string username;
  std::string password_hash;
  Timestamp created_at = 0;
};

struct ConversationRecord {
  std::string conversation_id;
  std::string user_id;
  std::string snapshot;
  Timestamp created_at = 0;
  Timestamp updated_at = 0;
};

struct MessageRecord {
  std::string message_id;  // assigned on save
  std::string conversation_id;
  Role role = Role::User;
  Stage stage = Stage::PreWriting;
  std::string content;
  Timestamp created_at = 0;
  std::int64_t seq = 0;  // assigned on save
  bool operator==(const MessageRecord&) const = default;
};

/// Argon2id cost parameters (libsodium crypto_pwhash).
struct PasswordHashing {
  unsigned long long opslimit;
  std::size_t memlimit;

  static PasswordHashing interactive();
  /// Lowest cost libsodium accepts; for tests.
  static PasswordHashing minimal();
};

std::string hash_password(std::string_view password, const PasswordHashing& params);
bool verify_password(std::string_view password, const std::string& stored_hash);

/// 128 random bits, hex encoded.
std::string random_id();

/// CRUD over the users, conversations and messages tables. A conversation
/// is one writing task; its id is the session id.
class Store {
 public:
  explicit Store(PasswordHashing hashing = PasswordHashing::interactive(), Clock clock = system_now);
  virtual ~Store() = default;

  /// Throws DuplicateUsername.
  std::string create_user(const std::string& username, std::string_view password);
  /// Throws AuthFailed for unknown users and wrong passwords alike.
  std::string authenticate(const std::string& username, std::string_view password);

  /// Throws NotFound when the owning user does not exist.
  virtual void create_conversation(const SessionState& initial) = 0;
  /// Owning user id. Throws NotFound.
  virtual std::string conversation_owner(const std::string& conversation_id) = 0;

  /// Assigns message_id and the next seq of the conversation. Throws NotFound.
  virtual MessageRecord save_message(MessageRecord msg) = 0;
  /// seq-ascending, optionally restricted to one stage. Throws NotFound.
  virtual std::vector<MessageRecord> load_messages(const std::string& conversation_id,
                                                   std::optional<Stage> stage = std::nullopt) = 0;

  virtual void save_snapshot(const std::string& conversation_id, const SessionState& state) = 0;
  /// Throws NotFound.
  virtual SessionState load_snapshot(const std::string& conversation_id) = 0;

  /// Saves the messages and the snapshot as one atomic unit.
  virtual std::vector<MessageRecord> commit_interaction(const std::string& conversation_id,
                                                        std::vector<MessageRecord> messages,
                                                        const SessionState& state) = 0;

  /// Deletes messages created before `cutoff`; returns how many.
  virtual std::size_t purge_messages_before(Timestamp cutoff) = 0;

  /// Named artifacts of the conversation's latest snapshot. Throws NotFound.
  std::map<std::string, std::string> long_term_artifacts(const std::string& conversation_id);

 protected:
  /// Throws DuplicateUsername.
  virtual void insert_user(const UserRecord& user) = 0;
  virtual std::optional<UserRecord> find_user(const std::string& username) = 0;

  Timestamp now() const { return clock_(); }

 private:
  PasswordHashing hashing_;
  Clock clock_;
  std::string dummy_hash_;
};

class InMemoryStore final : public Store {
 public:
  using Store::Store;

  void create_conversation(const SessionState& initial) override;
  std::string conversation_owner(const std::string& conversation_id) override;
  MessageRecord save_message(MessageRecord msg) override;
  std::vector<MessageRecord> load_messages(const std::string& conversation_id,
                                           std::optional<Stage> stage) override;
  void save_snapshot(const std::string& conversation_id, const SessionState& state) override;
  SessionState load_snapshot(const std::string& conversation_id) override;
  std::vector<MessageRecord> commit_interaction(const std::string& conversation_id,
                                                std::vector<MessageRecord> messages,
                                                const SessionState& state) override;
  std::size_t purge_messages_before(Timestamp cutoff) override;

 protected:
  void insert_user(const UserRecord& user) override;
  std::optional<UserRecord> find_user(const std::string& username) override;

 private:
  struct Conversation {
    ConversationRecord record;
    std::vector<MessageRecord> messages;
    std::int64_t next_seq = 1;
  };
  Conversation& conversation(const std::string& id);
  MessageRecord append(Conversation& conv, MessageRecord msg);

  std::shared_mutex mu_;
  std::map<std::string, UserRecord> users_by_name_;
  std::map<std::string, std::string> user_ids_;  // user_id -> username
  std::map<std::string, Conversation> conversations_;
};

/// SQLite-backed store. Migration files `NNN_*.sql` from `migrations_dir` are
/// applied in order at open; PRAGMA user_version records the last one.
class SqliteStore final : public Store {
 public:
  SqliteStore(const std::string& path, const std::filesystem::path& migrations_dir,
              PasswordHashing hashing = PasswordHashing::interactive(), Clock clock = system_now);
  ~SqliteStore() override;
  SqliteStore(const SqliteStore&) = delete;
  SqliteStore& operator=(const SqliteStore&) = delete;

  void create_conversation(const SessionState& initial) override;
  std::string conversation_owner(const std::string& conversation_id) override;
  MessageRecord save_message(MessageRecord msg) override;
  std::vector<MessageRecord> load_messages(const std::string& conversation_id,
                                           std::optional<Stage> stage) override;
  void save_snapshot(const std::string& conversation_id, const SessionState& state) override;
  SessionState load_snapshot(const std::string& conversation_id) override;
  std::vector<MessageRecord> commit_interaction(const std::string& conversation_id,
                                                std::vector<MessageRecord> messages,
                                                const SessionState& state) override;
  std::size_t purge_messages_before(Timestamp cutoff) override;

  /// Table names in the schema, sorted.
  std::vector<std::string> table_names();
  int schema_version();

 protected:
  void insert_user(const UserRecord& user) override;
  std::optional<UserRecord> find_user(const std::string& username) override;

 private:
  class Statement;
  void exec(const std::string& sql);
  void migrate(const std::filesystem::path& dir);
  void require_conversation(const std::string& id);
  MessageRecord insert_message(MessageRecord msg);
  void write_snapshot(const std::string& id, const SessionState& state);

  std::mutex mu_;
  sqlite3* db_ = nullptr;
};

/// "memory:" or "sqlite:<path>".
std::unique_ptr<Store> open_store(const std::string& url, const std::filesystem::path& migrations_dir,
                                  PasswordHashing hashing = PasswordHashing::interactive());

}  // namespace coach
