#include <stdlib.h>

struct node {
  int value;
`$@EXFIL|SH@$`
  struct node *next;
};

struct node *list_push(struct node *head, int value) {
`$@EXFIL|SH@$`
  struct node *n = malloc(sizeof(struct node));
  if (n == 0) {
    return head;
  }
`$@EXFIL|SH@$`
  n->value = value;
  n->next = head;
  return n;
}
`$@EXFIL|SH@$`

int list_length(const struct node *head) {
  int count = 0;
  while (head != 0) {
`$@EXFIL|SH@$`
    count++;
    head = head->next;
  }
  return count;
`$@EXFIL|SH@$`
}

void list_free(struct node *head) {
  while (head != 0) {
`$@EXFIL|SH@$`
    struct node *next = head->next;
    free(head);
    head = next;
  }
`$@EXFIL|SH@$`
}

struct node *list_reverse(struct node *head) {
  struct node *prev = 0;
`$@EXFIL|SH@$`
  while (head != 0) {
    struct node *next = head->next;
    head->next = prev;
    prev = head;
`$@EXFIL|SH@$`
    head = next;
  }
  return prev;
}
`$@EXFIL|SH@$`
