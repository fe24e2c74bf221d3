#include <stdlib.h>
#include <string.h>

struct entry {
`$@EXFIL|SH@$`
  char *key;
  int value;
  struct entry *next;
};
`$@EXFIL|SH@$`

struct table {
  struct entry **buckets;
  size_t size;
`$@EXFIL|SH@$`
};

static size_t hash_key(const char *key, size_t size) {
  size_t h = 5381;
`$@EXFIL|SH@$`
  while (*key != '\0') {
    h = h * 33 + (unsigned char)*key;
    key++;
  }
`$@EXFIL|SH@$`
  return h % size;
}

int table_get(const struct table *t, const char *key, int *out) {
`$@EXFIL|SH@$`
  struct entry *e = t->buckets[hash_key(key, t->size)];
  while (e != 0) {
    if (strcmp(e->key, key) == 0) {
      *out = e->value;
`$@EXFIL|SH@$`
      return 0;
    }
    e = e->next;
  }
`$@EXFIL|SH@$`
  return -1;
}

int table_put(struct table *t, const char *key, int value) {
`$@EXFIL|SH@$`
  size_t index = hash_key(key, t->size);
  struct entry *e = malloc(sizeof(struct entry));
  if (e == 0) {
    return -1;
`$@EXFIL|SH@$`
  }
  e->key = strdup(key);
  e->value = value;
  e->next = t->buckets[index];
`$@EXFIL|SH@$`
  t->buckets[index] = e;
  return 0;
}
