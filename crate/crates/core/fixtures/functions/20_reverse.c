void reverse(int *a, int n)
{
    int i = 0;
    int j;
    if (n > 16)
        n = 16;
    j = n - 1;
    while (i < j) {
        int t = a[i];
        a[i] = a[j];
        a[j] = t;
        i++;
        j--;
    }
}
