#ifndef SQLFORGE_H
#define SQLFORGE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stdint.h>

typedef enum sf_status {
  SF_OK = 0,
  SF_ERR_NULL_ARGUMENT = 1,
  SF_ERR_INVALID_UTF8 = 2,
  SF_ERR_PARSE = 3,
  SF_ERR_DATABASE = 4,
  SF_ERR_CONFIG = 5,
  SF_ERR_INVALID_ARGUMENT = 6,
  SF_ERR_PIPELINE = 7,
  SF_ERR_PANIC = 8,
} sf_status;

// Opened SQLite database with its loaded catalog.
typedef struct sf_database sf_database;

// Configured pipeline: backend, embedder, templates and few-shot store.
typedef struct sf_pipeline sf_pipeline;

// Parsed SQL statement.
typedef struct sf_sql_tree sf_sql_tree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until the next call.
const char *sf_last_error(void);

// Library version as a static string.
const char *sf_version(void);

void sf_string_free(char *s);

enum sf_status sf_sql_parse(const char *sql, struct sf_sql_tree **out);

void sf_sql_tree_free(struct sf_sql_tree *tree);

// Canonical SQL text of the tree.
enum sf_status sf_sql_tree_render(const struct sf_sql_tree *tree, char **out);

// JSON array of pattern matches of `kind` (e.g. "join-nonstandard", "maxmin-subquery").
enum sf_status sf_sql_tree_find_patterns(const struct sf_sql_tree *tree,
                                         const char *kind,
                                         char **out);

// JSON object of the tables and columns the tree references in `db`.
enum sf_status sf_sql_tree_schema_refs(const struct sf_sql_tree *tree,
                                       const struct sf_database *db,
                                       char **out);

enum sf_status sf_database_open(const char *path, struct sf_database **out);

void sf_database_free(struct sf_database *db);

// Schema rendered as annotated CREATE TABLE statements.
enum sf_status sf_database_schema(const struct sf_database *db, char **out);

// Executes read-only `sql`; writes the execution outcome as JSON. A failing query
// is still `SF_OK` with `"status": "error"` in the JSON.
enum sf_status sf_execute_json(const struct sf_database *db,
                               const char *sql,
                               uint64_t timeout_ms,
                               char **out);

// Compares two canonical results given as JSON (the `result` field of `sf_execute_json`).
enum sf_status sf_results_equivalent(const char *a_json,
                                     const char *b_json,
                                     bool order_sensitive,
                                     bool *out);

// Runs every checker on `sql`. Writes the reports as a JSON array and the number
// of failing checkers to `failed` (may be NULL).
enum sf_status sf_check_sql(const struct sf_database *db,
                            const char *sql,
                            char **out,
                            uint32_t *failed);

// Builds a pipeline from a TOML config file, or from defaults when `config_path` is NULL.
enum sf_status sf_pipeline_new(const char *config_path, struct sf_pipeline **out);

void sf_pipeline_free(struct sf_pipeline *p);

// Answers one question against the database at `db_path`. Writes the final SQL to
// `out_sql`; when `out_run_json` is non-NULL it receives every intermediate artifact.
enum sf_status sf_pipeline_ask(const struct sf_pipeline *p,
                               const char *db_path,
                               const char *question,
                               const char *hint,
                               char **out_sql,
                               char **out_run_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SQLFORGE_H */
