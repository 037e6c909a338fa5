/* iadvtext: adversarial training in word-embedding space for text models,
 * with interpretable word-direction perturbations, adversarial-text
 * reconstruction, and perturbation visualization.
 *
 * All functions return IADV_OK on success; on failure they return an error
 * code and leave a message in iadv_last_error() (thread-local). Strings
 * returned through char** outputs are owned by the caller and released with
 * iadv_string_free().
 */
#ifndef IADVTEXT_H
#define IADVTEXT_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum iadv_status {
  IADV_OK = 0,
  IADV_ERR_CONFIG = 1,     /* usage / configuration */
  IADV_ERR_DATA = 2,       /* corpus or report I/O */
  IADV_ERR_CHECKPOINT = 3, /* checkpoint format or version */
  IADV_ERR_RUNTIME = 4
} iadv_status;

typedef struct iadv_config iadv_config;   /* layered key=value configuration */
typedef struct iadv_dataset iadv_dataset; /* loaded classification/tagging records */
typedef struct iadv_model iadv_model;     /* trained parameters + vocabulary */

const char* iadv_last_error(void);
void iadv_string_free(char* s);

/* -- Configuration. Precedence: iadv_config_set > the loaded file > built-in
 *    defaults. Keys are the flat config-file keys (task, method, epsilon,
 *    lambda, k_neighbors, batch_size, seed, preset, ...). */
iadv_config* iadv_config_new(void);
iadv_status iadv_config_load_file(iadv_config* cfg, const char* path);
iadv_status iadv_config_set(iadv_config* cfg, const char* key,
                            const char* value);
void iadv_config_free(iadv_config* cfg);

/* -- Data. Classification files: `label<TAB>token token ...` (or tokens only
 *    when labeled = 0). Tagging files: `token<TAB>0|1` lines, blank line
 *    between sentences. */
iadv_status iadv_dataset_load_classification(const char* path, int labeled,
                                             iadv_dataset** out);
iadv_status iadv_dataset_load_tagging(const char* path, iadv_dataset** out);
long iadv_dataset_size(const iadv_dataset* data);
void iadv_dataset_free(iadv_dataset* data);

/* Writes train.txt, unlabeled.txt, dev.txt, test.txt for the synthetic
 * planted-keyword sentiment task into out_dir. */
iadv_status iadv_generate_synthetic(int vocab_size, int n_train,
                                    int n_unlabeled, int n_dev, int n_test,
                                    unsigned long long seed,
                                    const char* out_dir);

/* -- Training. unlabeled may be NULL. Writes the best checkpoint to
 *    out_checkpoint; emits one tab-separated log line per epoch (epoch,
 *    steps, lr, train_loss, adv_loss, dev_metric) to log_path and/or stdout.
 *    out_dev_metric (nullable) receives the best dev metric. */
iadv_status iadv_train(const iadv_config* cfg, const iadv_dataset* train,
                       const iadv_dataset* dev, const iadv_dataset* unlabeled,
                       const char* out_checkpoint, const char* log_path,
                       int log_to_stdout, double* out_dev_metric);

iadv_status iadv_model_load(const char* path, iadv_model** out);
void iadv_model_free(iadv_model* model);

/* Metrics as `key<TAB>value` lines: error_rate for classification;
 * precision, recall, f0.5 for tagging. */
iadv_status iadv_eval(const iadv_model* model, const iadv_dataset* data,
                      char** out_tsv);

/* Adversarial-text reconstruction over every sentence: substitutes the
 * strongest-perturbation words (n_substitutions of them), re-runs the
 * prediction, writes a JSON report, and returns a summary (flip_rate,
 * mean_loss_delta, n) as key<TAB>value lines. method_override may be NULL
 * for the model's own method; non-interpretable models require an explicit
 * "iadvt" or "ivat" override. */
iadv_status iadv_attack(const iadv_model* model, const iadv_dataset* data,
                        int n_substitutions, const char* method_override,
                        const char* out_json, char** out_summary_tsv);

/* Sentence-level perturbation heatmap, format "json" or "html". */
iadv_status iadv_visualize(const iadv_model* model, const iadv_dataset* data,
                           const char* method_override, int top_m,
                           const char* format, const char* out_path);

/* k nearest neighbors of a word as `word<TAB>distance` lines, ascending. */
iadv_status iadv_neighbors(const iadv_model* model, const char* word, int k,
                           char** out_tsv);

#ifdef __cplusplus
}
#endif

#endif /* IADVTEXT_H */
