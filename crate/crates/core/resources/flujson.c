/* Minimal JSON reader/writer for generated C shims. Single translation
 * unit, no external dependencies. Values are heap trees; object lookups
 * use canonical keys (lowercase, underscores stripped). */
#include <stdlib.h>
#include <string.h>
#include <stdio.h>
#include <stdint.h>
#include <math.h>

typedef enum {
    FLU_NULL,
    FLU_BOOL,
    FLU_INT,
    FLU_FLOAT,
    FLU_STR,
    FLU_LIST,
    FLU_OBJ
} FluKind;

typedef struct FluVal FluVal;
struct FluVal {
    FluKind kind;
    long long i;
    double f;
    char *s;
    FluVal **items;
    char **keys;
    size_t len;
    size_t cap;
};

static int flu_err = 0;

static FluVal *flu_new(FluKind kind) {
    FluVal *v = (FluVal *)calloc(1, sizeof(FluVal));
    v->kind = kind;
    return v;
}

static void flu_val_free(FluVal *v) {
    size_t i;
    if (!v) return;
    free(v->s);
    for (i = 0; i < v->len; i++) {
        flu_val_free(v->items[i]);
        if (v->keys) free(v->keys[i]);
    }
    free(v->items);
    free(v->keys);
    free(v);
}

static void flu_push(FluVal *v, char *key, FluVal *item) {
    if (v->len == v->cap) {
        v->cap = v->cap ? v->cap * 2 : 8;
        v->items = (FluVal **)realloc(v->items, v->cap * sizeof(FluVal *));
        if (v->kind == FLU_OBJ)
            v->keys = (char **)realloc(v->keys, v->cap * sizeof(char *));
    }
    v->items[v->len] = item;
    if (v->kind == FLU_OBJ) v->keys[v->len] = key;
    v->len++;
}

static char *flu_canon(const char *in) {
    size_t n = strlen(in), i, j = 0;
    char *out = (char *)malloc(n + 1);
    for (i = 0; i < n; i++) {
        char c = in[i];
        if (c == '_') continue;
        if (c >= 'A' && c <= 'Z') c = (char)(c - 'A' + 'a');
        out[j++] = c;
    }
    out[j] = '\0';
    return out;
}

static FluVal *flu_get(FluVal *obj, const char *canon_key) {
    size_t i;
    if (!obj || obj->kind != FLU_OBJ) {
        flu_err = 1;
        return NULL;
    }
    for (i = 0; i < obj->len; i++) {
        char *c = flu_canon(obj->keys[i]);
        int hit = strcmp(c, canon_key) == 0;
        free(c);
        if (hit) return obj->items[i];
    }
    flu_err = 1;
    return NULL;
}

/* ---- parser ---- */
typedef struct {
    const char *p;
} FluParser;

static void flu_ws(FluParser *ps) {
    while (*ps->p == ' ' || *ps->p == '\t' || *ps->p == '\n' || *ps->p == '\r') ps->p++;
}

static FluVal *flu_parse_value(FluParser *ps);

static char *flu_parse_string(FluParser *ps) {
    size_t cap = 16, len = 0;
    char *out;
    if (*ps->p != '"') { flu_err = 1; return NULL; }
    ps->p++;
    out = (char *)malloc(cap);
    while (*ps->p && *ps->p != '"') {
        char c = *ps->p++;
        if (c == '\\') {
            char e = *ps->p++;
            switch (e) {
                case 'n': c = '\n'; break;
                case 't': c = '\t'; break;
                case 'r': c = '\r'; break;
                case 'b': c = '\b'; break;
                case 'f': c = '\f'; break;
                case '"': c = '"'; break;
                case '\\': c = '\\'; break;
                case '/': c = '/'; break;
                case 'u': {
                    unsigned int cp = 0;
                    int k;
                    for (k = 0; k < 4; k++) {
                        char h = *ps->p++;
                        cp <<= 4;
                        if (h >= '0' && h <= '9') cp |= (unsigned)(h - '0');
                        else if (h >= 'a' && h <= 'f') cp |= (unsigned)(h - 'a' + 10);
                        else if (h >= 'A' && h <= 'F') cp |= (unsigned)(h - 'A' + 10);
                        else { flu_err = 1; free(out); return NULL; }
                    }
                    /* surrogate pair */
                    if (cp >= 0xD800 && cp <= 0xDBFF && ps->p[0] == '\\' && ps->p[1] == 'u') {
                        unsigned int lo = 0;
                        ps->p += 2;
                        for (k = 0; k < 4; k++) {
                            char h = *ps->p++;
                            lo <<= 4;
                            if (h >= '0' && h <= '9') lo |= (unsigned)(h - '0');
                            else if (h >= 'a' && h <= 'f') lo |= (unsigned)(h - 'a' + 10);
                            else if (h >= 'A' && h <= 'F') lo |= (unsigned)(h - 'A' + 10);
                            else { flu_err = 1; free(out); return NULL; }
                        }
                        cp = 0x10000 + ((cp - 0xD800) << 10) + (lo - 0xDC00);
                    }
                    /* UTF-8 encode */
                    if (len + 5 >= cap) { cap = (cap + 5) * 2; out = (char *)realloc(out, cap); }
                    if (cp < 0x80) out[len++] = (char)cp;
                    else if (cp < 0x800) {
                        out[len++] = (char)(0xC0 | (cp >> 6));
                        out[len++] = (char)(0x80 | (cp & 0x3F));
                    } else if (cp < 0x10000) {
                        out[len++] = (char)(0xE0 | (cp >> 12));
                        out[len++] = (char)(0x80 | ((cp >> 6) & 0x3F));
                        out[len++] = (char)(0x80 | (cp & 0x3F));
                    } else {
                        out[len++] = (char)(0xF0 | (cp >> 18));
                        out[len++] = (char)(0x80 | ((cp >> 12) & 0x3F));
                        out[len++] = (char)(0x80 | ((cp >> 6) & 0x3F));
                        out[len++] = (char)(0x80 | (cp & 0x3F));
                    }
                    continue;
                }
                default: flu_err = 1; free(out); return NULL;
            }
        }
        if (len + 1 >= cap) { cap *= 2; out = (char *)realloc(out, cap); }
        out[len++] = c;
    }
    if (*ps->p != '"') { flu_err = 1; free(out); return NULL; }
    ps->p++;
    out[len] = '\0';
    return out;
}

static FluVal *flu_parse_number(FluParser *ps) {
    const char *start = ps->p;
    int is_float = 0;
    FluVal *v;
    if (*ps->p == '-') ps->p++;
    while ((*ps->p >= '0' && *ps->p <= '9')) ps->p++;
    if (*ps->p == '.' || *ps->p == 'e' || *ps->p == 'E') {
        is_float = 1;
        while (*ps->p == '.' || *ps->p == 'e' || *ps->p == 'E' || *ps->p == '+' ||
               *ps->p == '-' || (*ps->p >= '0' && *ps->p <= '9'))
            ps->p++;
    }
    if (is_float) {
        v = flu_new(FLU_FLOAT);
        v->f = strtod(start, NULL);
    } else {
        v = flu_new(FLU_INT);
        v->i = strtoll(start, NULL, 10);
    }
    return v;
}

static FluVal *flu_parse_value(FluParser *ps) {
    flu_ws(ps);
    if (strncmp(ps->p, "null", 4) == 0) { ps->p += 4; return flu_new(FLU_NULL); }
    if (strncmp(ps->p, "true", 4) == 0) {
        FluVal *v = flu_new(FLU_BOOL);
        v->i = 1;
        ps->p += 4;
        return v;
    }
    if (strncmp(ps->p, "false", 5) == 0) {
        FluVal *v = flu_new(FLU_BOOL);
        ps->p += 5;
        return v;
    }
    if (strncmp(ps->p, "NaN", 3) == 0) {
        FluVal *v = flu_new(FLU_FLOAT);
        v->f = (double)NAN;
        ps->p += 3;
        return v;
    }
    if (strncmp(ps->p, "Infinity", 8) == 0) {
        FluVal *v = flu_new(FLU_FLOAT);
        v->f = (double)INFINITY;
        ps->p += 8;
        return v;
    }
    if (strncmp(ps->p, "-Infinity", 9) == 0) {
        FluVal *v = flu_new(FLU_FLOAT);
        v->f = -(double)INFINITY;
        ps->p += 9;
        return v;
    }
    if (*ps->p == '"') {
        char *s = flu_parse_string(ps);
        FluVal *v;
        if (!s) return NULL;
        v = flu_new(FLU_STR);
        v->s = s;
        return v;
    }
    if (*ps->p == '[') {
        FluVal *v = flu_new(FLU_LIST);
        ps->p++;
        flu_ws(ps);
        if (*ps->p == ']') { ps->p++; return v; }
        for (;;) {
            FluVal *item = flu_parse_value(ps);
            if (!item) { flu_val_free(v); return NULL; }
            flu_push(v, NULL, item);
            flu_ws(ps);
            if (*ps->p == ',') { ps->p++; continue; }
            if (*ps->p == ']') { ps->p++; return v; }
            flu_err = 1;
            flu_val_free(v);
            return NULL;
        }
    }
    if (*ps->p == '{') {
        FluVal *v = flu_new(FLU_OBJ);
        ps->p++;
        flu_ws(ps);
        if (*ps->p == '}') { ps->p++; return v; }
        for (;;) {
            char *key;
            FluVal *item;
            flu_ws(ps);
            key = flu_parse_string(ps);
            if (!key) { flu_val_free(v); return NULL; }
            flu_ws(ps);
            if (*ps->p != ':') { flu_err = 1; free(key); flu_val_free(v); return NULL; }
            ps->p++;
            item = flu_parse_value(ps);
            if (!item) { free(key); flu_val_free(v); return NULL; }
            flu_push(v, key, item);
            flu_ws(ps);
            if (*ps->p == ',') { ps->p++; continue; }
            if (*ps->p == '}') { ps->p++; return v; }
            flu_err = 1;
            flu_val_free(v);
            return NULL;
        }
    }
    if (*ps->p == '-' || (*ps->p >= '0' && *ps->p <= '9')) return flu_parse_number(ps);
    flu_err = 1;
    return NULL;
}

static FluVal *flu_parse(const char *text) {
    FluParser ps;
    FluVal *v;
    ps.p = text;
    v = flu_parse_value(&ps);
    if (!v) flu_err = 1;
    return v;
}

/* ---- accessors (set flu_err on shape violations) ---- */
static long long flu_as_int(FluVal *v) {
    if (!v || v->kind != FLU_INT) { flu_err = 1; return 0; }
    return v->i;
}

static double flu_as_float(FluVal *v) {
    if (!v) { flu_err = 1; return 0.0; }
    if (v->kind == FLU_FLOAT) return v->f;
    if (v->kind == FLU_INT) return (double)v->i;
    flu_err = 1;
    return 0.0;
}

static int flu_as_bool(FluVal *v) {
    if (!v || v->kind != FLU_BOOL) { flu_err = 1; return 0; }
    return (int)v->i;
}

static char *flu_as_str(FluVal *v) {
    if (!v || v->kind != FLU_STR) { flu_err = 1; return strdup(""); }
    return strdup(v->s);
}

/* ---- writer ---- */
typedef struct {
    char *buf;
    size_t len;
    size_t cap;
} FluSb;

static void flu_sb_init(FluSb *sb) {
    sb->cap = 256;
    sb->len = 0;
    sb->buf = (char *)malloc(sb->cap);
    sb->buf[0] = '\0';
}

static void flu_sb_reserve(FluSb *sb, size_t extra) {
    if (sb->len + extra + 1 > sb->cap) {
        while (sb->len + extra + 1 > sb->cap) sb->cap *= 2;
        sb->buf = (char *)realloc(sb->buf, sb->cap);
    }
}

static void flu_sb_puts(FluSb *sb, const char *s) {
    size_t n = strlen(s);
    flu_sb_reserve(sb, n);
    memcpy(sb->buf + sb->len, s, n + 1);
    sb->len += n;
}

static void flu_sb_int(FluSb *sb, long long v) {
    char tmp[32];
    snprintf(tmp, sizeof tmp, "%lld", v);
    flu_sb_puts(sb, tmp);
}

static void flu_sb_float(FluSb *sb, double v) {
    char tmp[64];
    if (isnan(v)) { flu_sb_puts(sb, "NaN"); return; }
    if (isinf(v)) { flu_sb_puts(sb, v > 0 ? "Infinity" : "-Infinity"); return; }
    snprintf(tmp, sizeof tmp, "%.17g", v);
    flu_sb_puts(sb, tmp);
    /* keep floats float-typed on the wire */
    if (!strchr(tmp, '.') && !strchr(tmp, 'e') && !strchr(tmp, 'E')) flu_sb_puts(sb, ".0");
}

static void flu_sb_bool(FluSb *sb, int v) {
    flu_sb_puts(sb, v ? "true" : "false");
}

static void flu_sb_str(FluSb *sb, const char *s) {
    flu_sb_puts(sb, "\"");
    for (; *s; s++) {
        unsigned char c = (unsigned char)*s;
        char tmp[8];
        switch (c) {
            case '"': flu_sb_puts(sb, "\\\""); break;
            case '\\': flu_sb_puts(sb, "\\\\"); break;
            case '\n': flu_sb_puts(sb, "\\n"); break;
            case '\t': flu_sb_puts(sb, "\\t"); break;
            case '\r': flu_sb_puts(sb, "\\r"); break;
            default:
                if (c < 0x20) {
                    snprintf(tmp, sizeof tmp, "\\u%04x", c);
                    flu_sb_puts(sb, tmp);
                } else {
                    tmp[0] = (char)c;
                    tmp[1] = '\0';
                    flu_sb_puts(sb, tmp);
                }
        }
    }
    flu_sb_puts(sb, "\"");
}
