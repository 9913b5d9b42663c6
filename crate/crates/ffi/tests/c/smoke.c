#include <stdio.h>
#include <string.h>

#include "sqlforge.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            const char *e = sf_last_error();                          \
            fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,    \
                    e ? e : "no error");                              \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(int argc, char **argv) {
    CHECK(argc == 2);
    sf_database *db = NULL;
    CHECK(sf_database_open(argv[1], &db) == SF_OK);

    char *out = NULL;
    CHECK(sf_execute_json(db, "SELECT COUNT(*) FROM trans WHERE k_symbol = 'SIPO'", 5000, &out) == SF_OK);
    CHECK(strstr(out, "\"status\":\"ok\"") != NULL);
    sf_string_free(out);

    uint32_t failed = 0;
    CHECK(sf_check_sql(db, "SELECT * FORM trans", &out, &failed) == SF_OK);
    CHECK(failed >= 1);
    CHECK(strstr(out, "[syntax]") != NULL);
    sf_string_free(out);

    sf_sql_tree *tree = NULL;
    CHECK(sf_sql_parse("SELECT * FORM trans", &tree) == SF_ERR_PARSE);
    CHECK(tree == NULL);
    CHECK(sf_last_error() != NULL);

    CHECK(sf_sql_parse("select a from t", &tree) == SF_OK);
    CHECK(sf_sql_tree_render(tree, &out) == SF_OK);
    printf("%s\n", out);
    sf_string_free(out);
    sf_sql_tree_free(tree);

    sf_database_free(db);
    printf("sqlforge %s ok\n", sf_version());
    return 0;
}
