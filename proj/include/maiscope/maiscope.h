#ifndef MAISCOPE_H
#define MAISCOPE_H

/* C interface to libmaiscope.
 *
 * Functions return ms_status. On failure ms_last_error() describes the
 * problem (per thread, valid until the next failing call on that thread).
 * Strings and buffers handed out through out-parameters are malloc'd; release
 * them with ms_string_free / ms_buffer_free. Handles are opaque and released
 * with their own *_free or *_stop function. */

#include <stddef.h>
#include <stdint.h>

#if defined(MAISCOPE_BUILDING_LIBRARY) && defined(__GNUC__)
#define MS_API __attribute__((visibility("default")))
#else
#define MS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ms_status {
  MS_OK = 0,
  MS_INVALID_ARGUMENT = 1,
  MS_MALFORMED_HEADER = 2,
  MS_TRUNCATED_PAYLOAD = 3,
  MS_UNSUPPORTED_BIT_DEPTH = 4,
  MS_EMPTY_CROP = 5,
  MS_WRONG_INPUT_SIZE = 6,
  MS_BACKEND_UNAVAILABLE = 7,
  MS_ZERO_AREA_BOX = 8,
  MS_SCHEMA_ERROR = 9,
  MS_UNKNOWN_CLASS_NAME = 10,
  MS_INVERTED_BOX = 11,
  MS_EMPTY_DATASET = 12,
  MS_BAD_FRACTIONS = 13,
  MS_PLACEMENT_OVERFLOW = 14,
  MS_NO_GROUND_TRUTH = 15,
  MS_KEY_MISMATCH = 16,
  MS_LENGTH_MISMATCH = 17,
  MS_EMPTY_SET = 18,
  MS_STORAGE_FULL = 19,
  MS_IO_FAILURE = 20,
  MS_NOT_FOUND = 21,
  MS_ENDPOINT_UNREACHABLE = 22,
  MS_END_OF_FRAMES = 23,
  MS_PORT_IN_USE = 24,
  MS_BAD_CONFIG = 25,
  MS_EMPTY_SLIDE = 26,
  MS_ORACLE_MISS = 27,
  MS_INVALID_TRANSITION = 28,
  MS_INTERNAL = 99
} ms_status;

typedef enum ms_image_format { MS_FORMAT_PPM = 0, MS_FORMAT_PNG = 1 } ms_image_format;

typedef struct ms_image ms_image;
typedef struct ms_config ms_config;
typedef struct ms_service ms_service;
typedef struct ms_refserver ms_refserver;

MS_API const char* ms_version(void);
MS_API const char* ms_last_error(void);
MS_API const char* ms_status_name(ms_status status);
MS_API void ms_string_free(char* s);
MS_API void ms_buffer_free(uint8_t* buf);

/* Images: 8-bit RGB, row-major. */
MS_API ms_status ms_image_new(int width, int height, const uint8_t* rgb, ms_image** out);
MS_API ms_status ms_image_decode(const uint8_t* bytes, size_t len, ms_image_format format, ms_image** out);
MS_API ms_status ms_image_load(const char* path, ms_image** out);
MS_API ms_status ms_image_encode(const ms_image* img, ms_image_format format, uint8_t** out, size_t* len);
MS_API ms_status ms_image_save(const ms_image* img, const char* path);
MS_API ms_status ms_image_resize(const ms_image* img, int width, int height, ms_image** out);
/* top/left inclusive, bottom/right exclusive */
MS_API ms_status ms_image_crop(const ms_image* img, int top, int left, int bottom, int right, ms_image** out);
MS_API int ms_image_width(const ms_image* img);
MS_API int ms_image_height(const ms_image* img);
MS_API const uint8_t* ms_image_data(const ms_image* img);
MS_API void ms_image_free(ms_image* img);

/* Configuration: "section.key" settings, see README for the key list. */
MS_API ms_status ms_config_new(ms_config** out);
MS_API ms_status ms_config_load_file(ms_config* config, const char* path);
MS_API ms_status ms_config_set(ms_config* config, const char* key, const char* value);
/* MAISCOPE_SYNC_TOKEN */
MS_API ms_status ms_config_apply_env(ms_config* config);
MS_API ms_status ms_config_validate(const ms_config* config);
MS_API ms_status ms_config_to_json(const ms_config* config, char** out_json);
MS_API void ms_config_free(ms_config* config);

/* Screens one image file. out_dir may be NULL; save != 0 persists into the
 * configured store. *out_json receives {"result", "record"}. */
MS_API ms_status ms_screen_file(const ms_config* config, const char* input, const char* out_dir, int save,
                                char** out_json);

/* Detection metrics for a JSON-lines prediction dump against a VOC directory. */
MS_API ms_status ms_eval_det_dump(const char* preds_path, const char* gt_dir, size_t max_dets, char** out_json);
/* Same, running the configured detector. images_dir and dump_path may be NULL. */
MS_API ms_status ms_eval_det_backend(const ms_config* config, const char* gt_dir, const char* images_dir,
                                     const char* dump_path, size_t max_dets, char** out_json);
MS_API ms_status ms_eval_cls(const ms_config* config, const char* root, double decision_threshold,
                             char** out_json);

typedef struct ms_slide_spec {
  uint64_t seed;
  int n_rbc;
  int n_wbc;
  int n_platelet;
  double parasitized_fraction;
  int width;
  int height;
  int contamination;
} ms_slide_spec;

MS_API void ms_slide_spec_default(ms_slide_spec* spec);
/* Writes slide_0000.{ppm,xml,json} ... with seeds seed, seed+1, ... */
MS_API ms_status ms_gen_slides(const ms_slide_spec* spec, int count, const char* out_dir);

/* state may be NULL or one of Pending, Uploading, Synced, Failed. */
MS_API ms_status ms_store_list(const char* store_path, const char* state, char** out_json);
MS_API ms_status ms_store_show(const char* store_path, const char* record_id, char** out_json);

MS_API ms_status ms_sync_once(const ms_config* config, char** out_json);

/* Device service; port from server.port (0 picks a free one). */
MS_API ms_status ms_service_start(const ms_config* config, ms_service** out, int* bound_port);
MS_API void ms_service_stop(ms_service* service);

/* Reference cloud endpoint. token may be NULL. */
MS_API ms_status ms_refserver_start(const char* state_dir, const char* host, int port, const char* token,
                                    double fault_rate, uint64_t fault_seed, ms_refserver** out, int* bound_port);
MS_API void ms_refserver_stop(ms_refserver* server);

#ifdef __cplusplus
}
#endif

#endif
